import numpy as np
import pytest

from labelattn import tensor as T
from labelattn.checkpoint import load_checkpoint, save_checkpoint
from labelattn.config import ModelConfig
from labelattn.errors import CompatibilityError, ContractError, InputError
from labelattn.model import (
    GROUPS,
    build_label_matrix,
    embed_label,
    encode,
    init_model,
    named_parameters,
    parameter_groups,
)
from labelattn.tensor import Tape, backward

from conftest import fake_tokens, wrapped


class TestEncode:
    def test_output_shape(self, tiny_model):
        doc = encode(tiny_model, wrapped([5, 6]))
        assert doc.H.shape == (4, 8)
        assert doc.cls.shape == (8,)

    def test_cls_is_row_zero(self, tiny_model):
        doc = encode(tiny_model, wrapped([5, 6, 7]))
        np.testing.assert_array_equal(doc.cls.view(), doc.H.view()[0])

    def test_eval_mode_deterministic(self, tiny_model):
        a = encode(tiny_model, wrapped([5, 6, 7]))
        b = encode(tiny_model, wrapped([5, 6, 7]))
        assert (a.H.view() == b.H.view()).all()

    def test_id_out_of_range(self, tiny_model):
        with pytest.raises(InputError):
            encode(tiny_model, wrapped([5, 24]))

    def test_too_long_sequence(self, tiny_model):
        with pytest.raises(InputError):
            encode(tiny_model, fake_tokens([2] + [5] * 16 + [3]))

    def test_shape_chain_holds_for_depths(self):
        for layers in (1, 2, 3):
            config = ModelConfig(
                vocab_size=12, num_labels=2, d_h=8, num_layers=layers,
                enc_heads=2, label_heads=2, ffn_mult=2, max_seq_len=8,
            )
            model = init_model(config, seed=1)
            doc = encode(model, wrapped([4, 5, 6]))
            assert doc.H.shape == (5, 8)

    def test_token_permutation_equivariance_with_position_swap(self, tiny_model):
        # swapping two tokens and the matching position-embedding rows
        # permutes the output rows the same way
        ids = [2, 5, 6, 7, 3]
        base = encode(tiny_model, fake_tokens(ids)).H.view().copy()

        swapped = [2, 6, 5, 7, 3]
        pos = tiny_model.position_embedding.view()
        pos[[1, 2]] = pos[[2, 1]]
        try:
            permuted = encode(tiny_model, fake_tokens(swapped)).H.view().copy()
        finally:
            pos[[1, 2]] = pos[[2, 1]]
        expected = base[[0, 2, 1, 3, 4]]
        np.testing.assert_allclose(permuted, expected, rtol=1e-12, atol=1e-12)

    def test_plain_swap_changes_output(self, tiny_model):
        # without the position fix the rows do not simply permute
        a = encode(tiny_model, fake_tokens([2, 5, 6, 3])).H.view()
        b = encode(tiny_model, fake_tokens([2, 6, 5, 3])).H.view()
        assert not np.allclose(a[1], b[2])


class TestLabelEmbedding:
    def test_embed_label_is_cls(self, tiny_model):
        desc = wrapped([8, 9])
        np.testing.assert_array_equal(
            embed_label(tiny_model, desc).view(),
            encode(tiny_model, desc).cls.view(),
        )

    def test_distinct_descriptions_distinct_vectors(self, tiny_model):
        a = embed_label(tiny_model, wrapped([8, 9]))
        b = embed_label(tiny_model, wrapped([10, 11]))
        assert np.abs(a.view() - b.view()).max() > 1e-9

    def test_output_width(self, tiny_model):
        assert embed_label(tiny_model, wrapped([4])).shape == (8,)

    def test_label_matrix_shape_and_order(self, tiny_model):
        descs = [wrapped([4]), wrapped([5]), wrapped([6])]
        lm = build_label_matrix(tiny_model, descs, label_order=("a", "b", "c"))
        assert lm.U.shape == (3, 8)
        assert lm.label_order == ("a", "b", "c")
        reordered = build_label_matrix(
            tiny_model, [descs[2], descs[0], descs[1]], label_order=("c", "a", "b")
        )
        np.testing.assert_array_equal(
            reordered.U.view(), lm.U.view()[[2, 0, 1]]
        )

    @pytest.mark.parametrize("num_labels", [10, 5])
    def test_label_matrix_row_count_follows_label_set(self, num_labels):
        config = ModelConfig(
            vocab_size=16, num_labels=num_labels, d_h=8, num_layers=1,
            enc_heads=2, label_heads=2, ffn_mult=2, max_seq_len=8,
        )
        model = init_model(config, seed=0)
        descs = [wrapped([4 + i % 8]) for i in range(num_labels)]
        assert build_label_matrix(model, descs).U.shape == (num_labels, 8)

    def test_wrong_description_count(self, tiny_model):
        with pytest.raises(ContractError):
            build_label_matrix(tiny_model, [wrapped([4])])

    def test_encoder_gets_label_side_gradients(self, tiny_model):
        descs = [wrapped([4]), wrapped([5]), wrapped([6])]
        with Tape() as tape:
            lm = build_label_matrix(tiny_model, descs, training=True)
            loss = T.tsum(lm.U)
        backward(loss, tape)
        g = tiny_model.token_embedding.grad
        assert g is not None and np.abs(g).max() > 0
        for t in named_parameters(tiny_model).values():
            t.grad = None


class TestParameters:
    def test_groups_partition_exactly(self, tiny_model):
        everything = named_parameters(tiny_model)
        groups = parameter_groups(tiny_model)
        assert set(groups) == set(GROUPS)
        seen = {}
        for g, members in groups.items():
            for path, t in members.items():
                assert path not in seen
                seen[path] = t
        assert seen.keys() == everything.keys()
        assert all(seen[k] is everything[k] for k in seen)

    def test_init_is_seed_deterministic(self, tiny_config):
        a = init_model(tiny_config, seed=7)
        b = init_model(tiny_config, seed=7)
        for (pa, ta), (pb, tb) in zip(
            named_parameters(a).items(), named_parameters(b).items()
        ):
            assert pa == pb
            assert (ta.data == tb.data).all()

    def test_init_weights_within_two_sigma(self, tiny_model):
        w = tiny_model.encoder_layers[0].wq.data
        assert np.abs(w).max() <= 0.04
        assert np.abs(w).std() > 0


class TestCheckpoint:
    def test_roundtrip_bitwise(self, tiny_model, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, tiny_model, vocab_sha256="deadbeef")
        loaded, vh = load_checkpoint(path)
        assert vh == "deadbeef"
        assert loaded.config == tiny_model.config
        orig = named_parameters(tiny_model)
        for p, t in named_parameters(loaded).items():
            assert (t.data == orig[p].data).all(), p

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"this is not a checkpoint")
        with pytest.raises(CompatibilityError):
            load_checkpoint(path)

    def test_rejects_renamed_parameter(self, tiny_model, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, tiny_model, vocab_sha256="x")
        blob = path.read_bytes()
        path.write_bytes(blob.replace(b"head.w1", b"head.wZ", 1))
        with pytest.raises(CompatibilityError):
            load_checkpoint(path)

    def test_rejects_wrong_shape(self, tiny_model, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, tiny_model, vocab_sha256="x")
        blob = path.read_bytes()
        # shape lists are serialized in the JSON header; swap one dimension
        path.write_bytes(blob.replace(b'"path": "head.w2", "shape": [8, 1]',
                                      b'"path": "head.w2", "shape": [1, 8]', 1))
        with pytest.raises(CompatibilityError):
            load_checkpoint(path)
