import json
import zlib

import numpy as np
import pytest
import torch

from gpt2_tsupw import ExportError, export
from gpt2_tsupw.export import available_layers, load_state_dict

# round-trip checks read the output back with the consumer-side loader
from timesup.weights import read_tsupw1


def make_checkpoint(path, d, layers, vocab, prefix="", seed=0):
    gen = torch.Generator().manual_seed(seed)

    def rnd(*shape):
        return torch.randn(*shape, generator=gen, dtype=torch.float32)

    state = {f"{prefix}wte.weight": rnd(vocab, d),
             f"{prefix}ln_f.weight": rnd(d), f"{prefix}ln_f.bias": rnd(d)}
    for i in range(layers):
        state.update({
            f"{prefix}h.{i}.ln_1.weight": rnd(d),
            f"{prefix}h.{i}.ln_1.bias": rnd(d),
            f"{prefix}h.{i}.attn.c_attn.weight": rnd(d, 3 * d),
            f"{prefix}h.{i}.attn.c_attn.bias": rnd(3 * d),
            f"{prefix}h.{i}.attn.c_proj.weight": rnd(d, d),
            f"{prefix}h.{i}.attn.c_proj.bias": rnd(d),
            f"{prefix}h.{i}.ln_2.weight": rnd(d),
            f"{prefix}h.{i}.ln_2.bias": rnd(d),
            f"{prefix}h.{i}.mlp.c_fc.weight": rnd(d, 4 * d),
            f"{prefix}h.{i}.mlp.c_fc.bias": rnd(4 * d),
            f"{prefix}h.{i}.mlp.c_proj.weight": rnd(4 * d, d),
            f"{prefix}h.{i}.mlp.c_proj.bias": rnd(d),
        })
    torch.save(state, path)
    return state


def test_fixture_round_trip_bit_exact(tmp_path):
    ckpt = tmp_path / "mini.pt"
    state = make_checkpoint(ckpt, d=8, layers=2, vocab=16)
    out = tmp_path / "mini.tsupw"
    manifest = export(ckpt, out, layers=2)
    loaded = read_tsupw1(out)
    assert set(loaded) == set(manifest.tensor_map.values())
    for src, dst in manifest.tensor_map.items():
        expected = state[src].numpy().astype(np.float64)
        assert np.array_equal(loaded[dst], expected), dst


def test_round_trip_through_model_init(tmp_path):
    from timesup.model import ComponentSetting, ModelConfig, init_model
    from timesup.rng import Rng
    ckpt = tmp_path / "mini.pt"
    state = make_checkpoint(ckpt, d=8, layers=2, vocab=16)
    out = tmp_path / "mini.tsupw"
    export(ckpt, out, layers=2)
    pretrained_all = {c: ComponentSetting("pretrained", "frozen")
                      for c in ("ln", "mha", "ffn", "emb")}
    config = ModelConfig(d=8, layers=2, heads=2, vocab=16, n_prototypes=4,
                         top_k=2, compressed_tokens=2, dropout=0.0, horizon=3,
                         patch_size=4, stride=2, n_patches=3,
                         components=pretrained_all)
    params = init_model(config, Rng(0), read_tsupw1(out))
    assert np.array_equal(params["wte"].value,
                          state["wte.weight"].numpy().astype(np.float64))
    assert np.array_equal(params["h.1.attn.w_qkv"].value,
                          state["h.1.attn.c_attn.weight"].numpy().astype(np.float64))
    assert not params["wte"].trainable


def test_gpt2_small_geometry_export(tmp_path):
    # full-geometry checkpoint (zeros keep it fast); 6-block truncation
    d, vocab = 768, 50257
    state = {"wte.weight": torch.zeros(vocab, d),
             "ln_f.weight": torch.ones(d), "ln_f.bias": torch.zeros(d)}
    for i in range(12):
        state.update({
            f"h.{i}.ln_1.weight": torch.ones(d), f"h.{i}.ln_1.bias": torch.zeros(d),
            f"h.{i}.attn.c_attn.weight": torch.zeros(d, 3 * d),
            f"h.{i}.attn.c_attn.bias": torch.zeros(3 * d),
            f"h.{i}.attn.c_proj.weight": torch.zeros(d, d),
            f"h.{i}.attn.c_proj.bias": torch.zeros(d),
            f"h.{i}.ln_2.weight": torch.ones(d), f"h.{i}.ln_2.bias": torch.zeros(d),
            f"h.{i}.mlp.c_fc.weight": torch.zeros(d, 4 * d),
            f"h.{i}.mlp.c_fc.bias": torch.zeros(4 * d),
            f"h.{i}.mlp.c_proj.weight": torch.zeros(4 * d, d),
            f"h.{i}.mlp.c_proj.bias": torch.zeros(d),
        })
    ckpt = tmp_path / "gpt2small.pt"
    torch.save(state, ckpt)
    out = tmp_path / "gpt2small.tsupw"
    manifest = export(ckpt, out, layers=6)
    loaded = read_tsupw1(out)
    assert loaded["wte"].shape == (50257, 768)
    gains = [name for name in loaded if name.endswith("ln_1.g")]
    assert len(gains) == 6
    assert all(loaded[g].shape == (768,) for g in gains)
    assert manifest.layers == 6
    assert "h.6.ln_1.g" not in loaded  # truncated at 6 blocks


def test_too_many_layers_writes_nothing(tmp_path):
    ckpt = tmp_path / "mini.pt"
    make_checkpoint(ckpt, d=8, layers=12, vocab=16)
    out = tmp_path / "mini.tsupw"
    with pytest.raises(ExportError, match="12"):
        export(ckpt, out, layers=13)
    assert not out.exists()
    assert not (tmp_path / "mini.tsupw.manifest.json").exists()


def test_missing_tensor_named(tmp_path):
    ckpt = tmp_path / "broken.pt"
    state = make_checkpoint(ckpt, d=8, layers=2, vocab=16)
    del state["h.1.mlp.c_fc.bias"]
    torch.save(state, ckpt)
    with pytest.raises(ExportError, match=r"h\.1\.mlp\.c_fc\.bias"):
        export(ckpt, tmp_path / "broken.tsupw", layers=2)


def test_dimension_mismatch_named(tmp_path):
    ckpt = tmp_path / "badshape.pt"
    state = make_checkpoint(ckpt, d=8, layers=1, vocab=16)
    state["h.0.attn.c_attn.weight"] = torch.zeros(8, 16)  # should be (8, 24)
    torch.save(state, ckpt)
    with pytest.raises(ExportError, match=r"h\.0\.attn\.c_attn\.weight"):
        export(ckpt, tmp_path / "badshape.tsupw", layers=1)


def test_transformer_prefix_stripped(tmp_path):
    ckpt = tmp_path / "prefixed.pt"
    make_checkpoint(ckpt, d=8, layers=1, vocab=16, prefix="transformer.")
    state = load_state_dict(ckpt)
    assert "wte.weight" in state
    assert available_layers(state) == 1
    out = tmp_path / "prefixed.tsupw"
    export(ckpt, out, layers=1)
    assert read_tsupw1(out)["wte"].shape == (16, 8)


def test_manifest_checksums_and_map(tmp_path):
    ckpt = tmp_path / "mini.pt"
    make_checkpoint(ckpt, d=8, layers=2, vocab=16)
    out = tmp_path / "mini.tsupw"
    manifest = export(ckpt, out, layers=2)
    doc = json.loads((tmp_path / "mini.tsupw.manifest.json").read_text())
    assert doc["source"].endswith("mini.pt")
    assert doc["layers"] == 2
    loaded = read_tsupw1(out)
    assert {t["name"] for t in doc["tensors"]} == set(loaded)
    for entry in doc["tensors"]:
        arr = loaded[entry["name"]].astype("<f4")
        assert entry["crc32"] == zlib.crc32(arr.tobytes(order="C"))
        assert entry["shape"] == list(arr.shape)
    # every tensor the forecasting stack requires for 2 blocks is present
    from timesup.model import backbone_tensor_names
    assert set(backbone_tensor_names(2)) <= set(manifest.tensor_map.values())


def test_cli_entry_point(tmp_path):
    from gpt2_tsupw.export import main
    ckpt = tmp_path / "mini.pt"
    make_checkpoint(ckpt, d=8, layers=2, vocab=16)
    out = tmp_path / "cli.tsupw"
    assert main([str(ckpt), str(out), "--layers", "2"]) == 0
    assert out.exists()
    assert main([str(ckpt), str(tmp_path / "x.tsupw"), "--layers", "9"]) == 1
