"""Reference worker for the line-delimited expression-evaluation protocol."""

PROTOCOL_VERSION = 1
