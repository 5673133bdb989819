import io
import json

import numpy as np
import pytest
from PIL import Image

from celledge.annotations import write_annotation
from celledge.synthetic import random_scene, render_scene, scene_annotation_set


def png_bytes(array: np.ndarray, mode: str | None = None) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(array, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def write_corpus(directory, n_images, size=(96, 96), seed=0, noise=2.0,
                 spacing=5.0, with_nuclei=False):
    """Drop (PNG, labelme JSON) fixture pairs into a directory."""
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    stems = []
    for i in range(n_images):
        shapes = random_scene(rng, size, n_cells=1, with_nuclei=with_nuclei)
        image = render_scene(size, shapes, blur_sigma=0.7)
        annotation = scene_annotation_set(
            shapes, size, image_path=f"img{i:03d}.png",
            spacing=spacing, noise=noise, rng=rng)
        stem = f"img{i:03d}"
        (directory / f"{stem}.png").write_bytes(
            png_bytes(np.asarray(image.pixels, dtype=np.uint8), mode="L"))
        (directory / f"{stem}.json").write_bytes(write_annotation(annotation))
        stems.append(stem)
    return stems


def annotation_bytes(shapes, width=64, height=64, image_path="img.png") -> bytes:
    doc = {
        "imagePath": image_path,
        "imageWidth": width,
        "imageHeight": height,
        "shapes": shapes,
    }
    return json.dumps(doc).encode()


def polygon_shape(label, points):
    return {"label": label, "points": points, "shape_type": "polygon"}


@pytest.fixture
def triangle_doc():
    return annotation_bytes([polygon_shape("nucleus", [[0, 0], [4, 0], [4, 4]])])
