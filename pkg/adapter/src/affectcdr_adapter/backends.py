"""Extractor backends.

Stub backends produce deterministic hash-seeded vectors and run anywhere;
they exist so pipelines and tests can exercise the full file contract
without model weights. Real backends are imported lazily and explain what
they need when the environment cannot support them.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np


class BackendUnavailable(RuntimeError):
    pass


def _seeded_vector(payload: bytes, dim: int, salt: str) -> np.ndarray:
    digest = hashlib.blake2b(salt.encode() + payload, digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return rng.standard_normal(dim).astype(np.float32)


class StubAudioBackend:
    """Deterministic stand-in for the deep audio extractor."""

    id = "stub-audio"

    def __init__(self, dim: int = 64):
        self.dim = dim

    def extract(self, path: Path) -> np.ndarray:
        return _seeded_vector(path.read_bytes(), self.dim, self.id)


class StubVisualBackend:
    """Deterministic stand-in for the visual backbone; 2048D like the real one."""

    id = "stub-visual"

    def __init__(self, dim: int = 2048):
        self.dim = dim

    def extract(self, path: Path) -> np.ndarray:
        return _seeded_vector(path.read_bytes(), self.dim, self.id)


class StubTextEmbedder:
    id = "stub-text"

    def __init__(self, dim: int = 768):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        return _seeded_vector(text.encode("utf-8"), self.dim, self.id)


class StubDescriber:
    """Offline description generator used in place of a hosted LLM/VLM."""

    id = "stub-describer"

    def describe(self, path: Path, metadata: dict) -> str:
        mood = metadata.get("valence", "unknown")
        return f"A piece with affective tone {mood}, asset {path.stem}."


class MertAudioBackend:
    """Deep audio embeddings from a pretrained music transformer (24 kHz mono)."""

    id = "mert-v1-330m"

    def __init__(self):
        try:
            import torch  # noqa: F401
            import torchaudio  # noqa: F401
            from transformers import AutoModel  # noqa: F401
        except ImportError as exc:
            raise BackendUnavailable(
                "the MERT backend needs torch, torchaudio and transformers plus"
                " downloaded m-a-p/MERT-v1-330M weights; install the 'models'"
                f" extra first ({exc})"
            ) from exc
        import torch
        from transformers import AutoModel

        self._torch = torch
        self._model = AutoModel.from_pretrained("m-a-p/MERT-v1-330M", trust_remote_code=True)
        self._model.eval()

    def extract(self, path: Path) -> np.ndarray:
        import torchaudio

        waveform, rate = torchaudio.load(str(path))
        waveform = waveform.mean(dim=0, keepdim=True)  # mono
        if rate != 24_000:
            waveform = torchaudio.functional.resample(waveform, rate, 24_000)
        with self._torch.inference_mode():
            hidden = self._model(waveform).last_hidden_state
        return hidden.mean(dim=1).squeeze(0).cpu().numpy().astype(np.float32)


class ResNet50VisualBackend:
    """2048D pooled features from a pretrained residual network (224x224 RGB)."""

    id = "resnet50"

    def __init__(self):
        try:
            import torch  # noqa: F401
            import torchvision  # noqa: F401
            from PIL import Image  # noqa: F401
        except ImportError as exc:
            raise BackendUnavailable(
                "the visual backend needs torch, torchvision and Pillow; install"
                f" the 'models' extra first ({exc})"
            ) from exc
        import torch
        from torchvision import models, transforms

        try:
            backbone = models.resnet50(weights=models.ResNet50_Weights.IMAGENET1K_V2)
        except Exception as exc:  # weight download failure
            raise BackendUnavailable(
                f"pretrained visual weights are not available in this environment ({exc})"
            ) from exc
        backbone.fc = torch.nn.Identity()
        backbone.eval()
        self._torch = torch
        self._model = backbone
        self._preprocess = transforms.Compose(
            [
                transforms.Resize((224, 224)),
                transforms.ToTensor(),
                transforms.Normalize(
                    mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]
                ),
            ]
        )

    def extract(self, path: Path) -> np.ndarray:
        from PIL import Image

        image = Image.open(path).convert("RGB")  # grayscale inputs converted here
        tensor = self._preprocess(image).unsqueeze(0)
        with self._torch.inference_mode():
            features = self._model(tensor)
        return features.squeeze(0).cpu().numpy().astype(np.float32)


class BertTextEmbedder:
    id = "bert-base"

    def __init__(self):
        try:
            from transformers import AutoModel, AutoTokenizer  # noqa: F401
        except ImportError as exc:
            raise BackendUnavailable(
                f"the text embedder needs transformers; install the 'models' extra ({exc})"
            ) from exc
        import torch
        from transformers import AutoModel, AutoTokenizer

        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained("bert-base-uncased")
        self._model = AutoModel.from_pretrained("bert-base-uncased")
        self._model.eval()

    def embed(self, text: str) -> np.ndarray:
        tokens = self._tokenizer(text, return_tensors="pt", truncation=True, max_length=512)
        with self._torch.inference_mode():
            hidden = self._model(**tokens).last_hidden_state
        return hidden.mean(dim=1).squeeze(0).cpu().numpy().astype(np.float32)


_AUDIO_BACKENDS = {"stub": StubAudioBackend, "mert": MertAudioBackend}
_VISUAL_BACKENDS = {"stub": StubVisualBackend, "resnet50": ResNet50VisualBackend}
_TEXT_BACKENDS = {"stub": StubTextEmbedder, "bert": BertTextEmbedder}


def get_backend(kind: str, name: str):
    table = {"audio": _AUDIO_BACKENDS, "visual": _VISUAL_BACKENDS, "text": _TEXT_BACKENDS}[kind]
    if name not in table:
        raise BackendUnavailable(f"unknown {kind} backend {name!r}; options: {sorted(table)}")
    return table[name]()
