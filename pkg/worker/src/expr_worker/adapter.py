"""Best-effort adapter around pre-trained generator/recognizer models.

Conventions (this adapter's own, documented here rather than claimed
faithful to any particular training pipeline):

  * both models are TorchScript archives loaded with torch.jit.load;
  * the generator maps (image tensor [1,3,H,W] in [0,1], AU row vector
    [1,M]) to an image tensor of the same shape;
  * the recognizer maps an image tensor to 7 logits, softmaxed here into
    the expression vector (anger, disgust, fear, happy, sad, surprise,
    neutral);
  * the source image is loaded once per session from the handshake's
    image_ref; generated frames are saved under the output directory,
    one session subdirectory per handshake, eval-<request id>.png inside.

Excluded from CI: model weights are large external artifacts.  The stub
backend is the contractual implementation.
"""

from __future__ import annotations

import os

GENOME_LENGTH = 17


class AdapterBackend:
    def __init__(self, generator_path: str, recognizer_path: str,
                 device: str = "cpu", out_dir: str = "phenotypes"):
        import torch  # deferred: only adapter mode needs it

        self._torch = torch
        self.device = device
        self.out_dir = out_dir
        self.generator = torch.jit.load(generator_path, map_location=device)
        self.recognizer = torch.jit.load(recognizer_path, map_location=device)
        self.generator.eval()
        self.recognizer.eval()
        self._session_dir = None
        self._image = None

    @property
    def genome_length(self) -> int:
        return GENOME_LENGTH

    def start_session(self, image_ref: str, session: int) -> None:
        from PIL import Image
        import numpy as np

        image = Image.open(image_ref).convert("RGB")
        array = np.asarray(image, dtype="float32") / 255.0
        tensor = self._torch.from_numpy(array).permute(2, 0, 1).unsqueeze(0)
        self._image = tensor.to(self.device)
        stem = os.path.splitext(os.path.basename(image_ref))[0]
        self._session_dir = os.path.join(self.out_dir, f"{stem}-{session:03d}")
        os.makedirs(self._session_dir, exist_ok=True)

    def evaluate(self, genome, request_id: int):
        if self._image is None:
            raise RuntimeError("no session image; handshake first")
        torch = self._torch
        with torch.no_grad():
            au = torch.tensor([list(genome)], dtype=torch.float32,
                              device=self.device)
            frame = self.generator(self._image, au)
            logits = self.recognizer(frame).flatten()
            probs = torch.softmax(logits, dim=0).tolist()
        path = os.path.join(self._session_dir, f"eval-{request_id:06d}.png")
        self._save_frame(frame, path)
        return tuple(probs), path

    def _save_frame(self, frame, path: str) -> None:
        from PIL import Image
        import numpy as np

        array = frame.squeeze(0).permute(1, 2, 0).clamp(0, 1).cpu().numpy()
        Image.fromarray((array * 255.0).astype("uint8")).save(path)
