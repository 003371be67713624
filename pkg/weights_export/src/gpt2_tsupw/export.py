"""Convert a GPT-2 checkpoint (torch state dict) into a TSUPW1 tensor file.

Exports the token-embedding table, the first `layers` transformer blocks, and
the final layer norm under the tensor names the forecasting stack expects.
GPT-2 stores its projection weights as Conv1D (input-major) matrices, which is
already the x @ W layout TSUPW1 consumers use, so tensors are copied verbatim
apart from the float32 cast.
"""

from __future__ import annotations

import argparse
import json
import struct
import sys
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

TSUPW1_MAGIC = b"TSUPW1\n"


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class ExportManifest:
    source: str
    layers: int
    tensor_map: dict[str, str]   # source name -> TSUPW1 name
    checksums: dict[str, int]    # TSUPW1 name -> crc32 of f32-LE payload


def _block_map(i: int) -> dict[str, str]:
    return {
        f"h.{i}.ln_1.weight": f"h.{i}.ln_1.g",
        f"h.{i}.ln_1.bias": f"h.{i}.ln_1.b",
        f"h.{i}.attn.c_attn.weight": f"h.{i}.attn.w_qkv",
        f"h.{i}.attn.c_attn.bias": f"h.{i}.attn.b_qkv",
        f"h.{i}.attn.c_proj.weight": f"h.{i}.attn.w_o",
        f"h.{i}.attn.c_proj.bias": f"h.{i}.attn.b_o",
        f"h.{i}.ln_2.weight": f"h.{i}.ln_2.g",
        f"h.{i}.ln_2.bias": f"h.{i}.ln_2.b",
        f"h.{i}.mlp.c_fc.weight": f"h.{i}.ffn.w_in",
        f"h.{i}.mlp.c_fc.bias": f"h.{i}.ffn.b_in",
        f"h.{i}.mlp.c_proj.weight": f"h.{i}.ffn.w_out",
        f"h.{i}.mlp.c_proj.bias": f"h.{i}.ffn.b_out",
    }


def _expected_shapes(i: int, d: int) -> dict[str, tuple[int, ...]]:
    return {
        f"h.{i}.ln_1.weight": (d,), f"h.{i}.ln_1.bias": (d,),
        f"h.{i}.attn.c_attn.weight": (d, 3 * d), f"h.{i}.attn.c_attn.bias": (3 * d,),
        f"h.{i}.attn.c_proj.weight": (d, d), f"h.{i}.attn.c_proj.bias": (d,),
        f"h.{i}.ln_2.weight": (d,), f"h.{i}.ln_2.bias": (d,),
        f"h.{i}.mlp.c_fc.weight": (d, 4 * d), f"h.{i}.mlp.c_fc.bias": (4 * d,),
        f"h.{i}.mlp.c_proj.weight": (4 * d, d), f"h.{i}.mlp.c_proj.bias": (d,),
    }


def load_state_dict(checkpoint_path) -> dict[str, np.ndarray]:
    """Load a torch checkpoint and normalize key prefixes to GPT-2 core names."""
    state = torch.load(checkpoint_path, map_location="cpu", weights_only=True)
    if hasattr(state, "state_dict"):
        state = state.state_dict()
    out = {}
    for key, tensor in state.items():
        if key.startswith("transformer."):
            key = key[len("transformer."):]
        out[key] = tensor.detach().cpu().numpy()
    return out


def available_layers(state: dict[str, np.ndarray]) -> int:
    count = 0
    while f"h.{count}.ln_1.weight" in state:
        count += 1
    return count


def _write_tsupw1(path, tensors: dict[str, np.ndarray]) -> dict[str, int]:
    chunks = [TSUPW1_MAGIC, struct.pack("<I", len(tensors))]
    checksums = {}
    for name, tensor in tensors.items():
        arr = np.ascontiguousarray(tensor, dtype="<f4")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            chunks.append(struct.pack("<I", dim))
        payload = arr.tobytes(order="C")
        checksums[name] = zlib.crc32(payload)
        chunks.append(payload)
    Path(path).write_bytes(b"".join(chunks))
    return checksums


def export(checkpoint_path, out_path, layers: int = 6) -> ExportManifest:
    """Write the TSUPW1 file plus a `<out>.manifest.json` beside it.

    Validates name and shape consistency before writing anything, so a failed
    export leaves no output file behind.
    """
    state = load_state_dict(checkpoint_path)
    have = available_layers(state)
    if layers < 1:
        raise ExportError(f"layers must be >= 1, got {layers}")
    if layers > have:
        raise ExportError(f"requested {layers} layers but checkpoint has {have}")

    name_map: dict[str, str] = {"wte.weight": "wte"}
    for i in range(layers):
        name_map.update(_block_map(i))
    name_map.update({"ln_f.weight": "ln_f.g", "ln_f.bias": "ln_f.b"})

    missing = [src for src in name_map if src not in state]
    if missing:
        raise ExportError(f"checkpoint missing tensor(s): {', '.join(missing)}")

    wte = state["wte.weight"]
    if wte.ndim != 2:
        raise ExportError(f"wte.weight must be 2-D, got shape {wte.shape}")
    d = wte.shape[1]
    expected: dict[str, tuple[int, ...]] = {"wte.weight": wte.shape,
                                            "ln_f.weight": (d,), "ln_f.bias": (d,)}
    for i in range(layers):
        expected.update(_expected_shapes(i, d))
    for src, shape in expected.items():
        if tuple(state[src].shape) != shape:
            raise ExportError(
                f"tensor {src}: shape {tuple(state[src].shape)} does not match "
                f"width d={d} (expected {shape})"
            )

    tensors = {dst: state[src] for src, dst in name_map.items()}
    checksums = _write_tsupw1(out_path, tensors)
    manifest = ExportManifest(source=str(checkpoint_path), layers=layers,
                              tensor_map=dict(name_map), checksums=checksums)
    manifest_path = Path(str(out_path) + ".manifest.json")
    manifest_path.write_text(json.dumps({
        "source": manifest.source,
        "layers": manifest.layers,
        "tensors": [
            {"name": name, "shape": list(tensors[name].shape),
             "crc32": checksums[name]}
            for name in tensors
        ],
    }, indent=2) + "\n", encoding="utf-8")
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gpt2-to-tsupw")
    parser.add_argument("checkpoint", help="torch state-dict file (.bin/.pt)")
    parser.add_argument("out", help="TSUPW1 output path")
    parser.add_argument("--layers", type=int, default=6)
    args = parser.parse_args(argv)
    try:
        manifest = export(args.checkpoint, args.out, layers=args.layers)
    except (ExportError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"exported {len(manifest.tensor_map)} tensors "
          f"({manifest.layers} blocks) to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
