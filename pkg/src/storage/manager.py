"""File storage for scenes, run configuration, images, metrics and checkpoints."""

import json
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from ..adversarial.discriminator import Discriminator
from ..core import ImageBuffer, check_image
from ..models import RunConfig, SceneFile, StepMetrics
from ..scene import Scene

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
PPM_MAGIC = b"P6"


class SceneFormatError(ValueError):
    """Raised when a scene or config document fails validation; names the field path."""

    def __init__(self, path: PathLike, error: Union[ValidationError, json.JSONDecodeError]):
        if isinstance(error, ValidationError):
            details = "; ".join(
                f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in error.errors()
            )
        else:
            details = f"invalid JSON at line {error.lineno} column {error.colno}: {error.msg}"
        super().__init__(f"{path}: {details}")
        self.path = Path(path)


class ImageFormatError(ValueError):
    """Raised for malformed image files; names the path and byte offset."""

    def __init__(self, path: PathLike, offset: int, reason: str):
        super().__init__(f"{path}: {reason} at byte {offset}")
        self.path = Path(path)
        self.offset = offset


def quantize(image: ImageBuffer) -> np.ndarray:
    """Round-half-up to 8 bits after clamping to [0, 1]."""
    return np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def encode_ppm(image: ImageBuffer) -> bytes:
    image = check_image(image)
    height, width = image.shape[:2]
    return f"P6\n{width} {height}\n255\n".encode("ascii") + quantize(image).tobytes()


def decode_ppm(data: bytes, path: PathLike = "<bytes>") -> ImageBuffer:
    if data[:2] != PPM_MAGIC:
        raise ImageFormatError(path, 0, f"expected magic {PPM_MAGIC!r}, found {data[:2]!r}")
    offset = 2
    fields = []
    while len(fields) < 3:
        while offset < len(data) and data[offset:offset + 1].isspace():
            offset += 1
        if offset < len(data) and data[offset:offset + 1] == b"#":
            while offset < len(data) and data[offset:offset + 1] != b"\n":
                offset += 1
            continue
        start = offset
        while offset < len(data) and data[offset:offset + 1].isdigit():
            offset += 1
        if start == offset:
            raise ImageFormatError(path, offset, "expected a header integer")
        fields.append(int(data[start:offset]))
    if offset >= len(data) or not data[offset:offset + 1].isspace():
        raise ImageFormatError(path, offset, "expected whitespace after header")
    offset += 1
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(path, offset, f"unsupported maxval {maxval}")
    if width <= 0 or height <= 0:
        raise ImageFormatError(path, offset, f"invalid size {width}x{height}")
    expected = width * height * 3
    if len(data) - offset != expected:
        raise ImageFormatError(path, offset, f"expected {expected} pixel bytes, found {len(data) - offset}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=expected, offset=offset)
    return pixels.reshape(height, width, 3).astype(np.float64) / 255.0


def write_image(image: ImageBuffer, path: PathLike) -> Path:
    """Write a PPM (P6), or a PNG when the suffix is ``.png``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(quantize(check_image(image)), mode="RGB").save(path)
    else:
        path.write_bytes(encode_ppm(image))
    return path


def read_image(path: PathLike) -> ImageBuffer:
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return decode_ppm(path.read_bytes(), path)


def _load_json(path: Path, model: type) -> BaseModel:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SceneFormatError(path, e) from e
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise SceneFormatError(path, e) from e


def _dump_json(doc: BaseModel, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc.model_dump(mode="json"), indent=1) + "\n", encoding="utf-8")
    return path


def load_scene_file(path: PathLike) -> SceneFile:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Scene file not found: {path}\nRun `wabe-splat make-fixtures` for examples")
    return _load_json(path, SceneFile)


def load_scene(path: PathLike) -> Scene:
    return Scene.from_file(load_scene_file(path))


def save_scene(scene: Union[Scene, SceneFile], path: PathLike) -> Path:
    doc = scene.to_file() if isinstance(scene, Scene) else scene
    return _dump_json(doc, Path(path))


def load_run_config(path: PathLike) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(
            f"Configuration file not found: {path}\n"
            f"Please create it based on data/config.example.json"
        )
    return _load_json(path, RunConfig)


def save_run_config(config: RunConfig, path: PathLike) -> Path:
    return _dump_json(config, Path(path))


def resolve_scene_path(config: RunConfig, config_path: PathLike) -> Path:
    """The scene path of a run config, relative to the config file."""
    scene = Path(config.scene)
    return scene if scene.is_absolute() else Path(config_path).parent / scene


class StorageManager:
    """Owns one output directory: images, metrics history and checkpoints."""

    def __init__(self, out_dir: PathLike = "out"):
        self.out_dir = Path(out_dir)
        self.checkpoint_dir = self.out_dir / "checkpoints"
        self.metrics_path = self.out_dir / "metrics.jsonl"
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def reset_metrics(self) -> None:
        if self.metrics_path.exists():
            self.metrics_path.unlink()

    def append_metrics(self, metrics: StepMetrics) -> None:
        with open(self.metrics_path, "a", encoding="utf-8") as f:
            f.write(metrics.model_dump_json() + "\n")

    def load_metrics(self) -> List[StepMetrics]:
        if not self.metrics_path.exists():
            return []
        with open(self.metrics_path, "r", encoding="utf-8") as f:
            return [StepMetrics.model_validate_json(line) for line in f if line.strip()]

    def save_scene(self, scene: Union[Scene, SceneFile], path: Optional[PathLike] = None) -> Path:
        return save_scene(scene, path or self.out_dir / "scene.json")

    def save_image(self, image: ImageBuffer, name: str) -> Path:
        return write_image(image, self.out_dir / name)

    def save_report(self, report: BaseModel, name: str) -> Path:
        path = self.out_dir / name
        path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path

    def save_checkpoint(self, iteration: int, scene: Scene, discriminator: Discriminator) -> Path:
        """``checkpoint_<iter>.json`` plus ``discriminator_<iter>.bin``."""
        self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        path = save_scene(scene, self.checkpoint_dir / f"checkpoint_{iteration:06d}.json")
        (self.checkpoint_dir / f"discriminator_{iteration:06d}.bin").write_bytes(discriminator.to_blob())
        logger.debug("Checkpoint written at iteration %d", iteration)
        return path

    def load_discriminator(self, path: PathLike) -> Discriminator:
        return Discriminator.from_blob(Path(path).read_bytes())
