"""Round-tripping MNIST-style IDX files through the loader.

Writes a tiny image/label pair in the IDX binary format by hand, loads it
back with fedsim.load_idx, and shows the normalized features. Point the
same call at real MNIST files (train-images-idx3-ubyte etc.) to run the
federation on actual digits.
"""

import struct
import tempfile
from pathlib import Path

from fedsim import load_idx

tmp = Path(tempfile.mkdtemp())

# Three 4x4 "images" with a diagonal stripe of increasing brightness.
images = tmp / "demo-images-idx3-ubyte"
labels = tmp / "demo-labels-idx1-ubyte"
pixel_rows = []
for k, level in enumerate((85, 170, 255)):
    img = bytearray(16)
    for d in range(4):
        img[d * 4 + d] = level
    pixel_rows.append(bytes(img))
images.write_bytes(struct.pack(">IIII", 0x803, 3, 4, 4) + b"".join(pixel_rows))
labels.write_bytes(struct.pack(">II", 0x801, 3) + bytes([0, 1, 2]))

ds = load_idx(images, labels)
print(f"loaded {len(ds)} samples, {ds.features.shape[1]} features, {ds.num_classes} classes")
print("labels:", ds.labels.tolist())
for i in range(3):
    diag = ds.features[i].reshape(4, 4).diagonal()
    print(f"image {i}: diagonal after /255 normalization -> {diag.round(3).tolist()}")
