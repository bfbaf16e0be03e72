import math

import numpy as np
import pytest

from vadd.errors import ContractError, FormatError
from vadd.fusion import (
    ATTENTION_VARIANTS,
    ModelConfig,
    attention_weight_matrices,
    batch_loss,
    export_weights,
    forward,
    forward_batch,
    import_weights,
    init_model,
    loss_and_gradients,
    parameter_shapes,
    parse_attention,
)
from vadd.store import SourceSpec

SOURCES = (
    SourceSpec("v1", "visual", 5),
    SourceSpec("v2", "visual", 4),
    SourceSpec("a1", "audio", 3),
)


def tiny_config(variant="ls", double_fc=True, seed=11, **overrides):
    kwargs = dict(
        sources=SOURCES,
        num_classes=3,
        d_model=8,
        num_heads=2,
        fc_hidden=6,
        dropout_rate=0.3,
        attention_placement=parse_attention(variant),
        double_fc=double_fc,
        es_chunk_tokens=2,
        seed=seed,
    )
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


def finite_difference_check(model, X, y, dropout_seed=99, h=1e-3,
                            rtol=1e-4, atol=1e-8):
    """Central differences on every parameter; returns worst relative error
    among entries above the truncation-noise floor."""
    _, grads = loss_and_gradients(model, X, y, training_mode=True,
                                  dropout_seed=dropout_seed)
    worst = 0.0
    for name, p in model.params.items():
        flat = p.ravel()
        gflat = grads[name].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = batch_loss(model, X, y, True, dropout_seed)
            flat[i] = orig - h
            lm = batch_loss(model, X, y, True, dropout_seed)
            flat[i] = orig
            fd = (lp - lm) / (2 * h)
            a = gflat[i]
            diff = abs(a - fd)
            assert diff <= atol + rtol * max(abs(a), abs(fd)), (
                f"{name}[{i}]: analytic {a!r} vs central-difference {fd!r}"
            )
            if max(abs(a), abs(fd)) > atol:
                worst = max(worst, diff / max(abs(a), abs(fd)))
    return worst


class TestConfig:
    def test_valid_default_shape_audit(self):
        model = init_model(tiny_config())
        model.shape_audit()

    def test_d_model_head_divisibility(self):
        with pytest.raises(ContractError, match="num_heads"):
            tiny_config(d_model=250, num_heads=4, es_chunk_tokens=2)

    def test_es_chunk_divisibility(self):
        with pytest.raises(ContractError):
            tiny_config(d_model=8, es_chunk_tokens=3)

    def test_same_seed_identical_params(self):
        m1 = init_model(tiny_config(seed=5))
        m2 = init_model(tiny_config(seed=5))
        for k in m1.params:
            assert np.array_equal(m1.params[k], m2.params[k])

    def test_dropout_rate_range(self):
        with pytest.raises(ContractError):
            tiny_config(dropout_rate=1.0)

    def test_config_dict_round_trip(self):
        cfg = tiny_config(variant="es+ms+ls", double_fc=False)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestForward:
    def test_zero_weights_bias_softmax(self):
        # All weights zero, final bias (1, 0, 0): independent softmax oracle.
        cfg = tiny_config(variant="ns", double_fc=False, dropout_rate=0.0)
        model = init_model(cfg)
        for k in model.params:
            model.params[k][:] = 0
        model.params["fc.b"][:] = np.array([1.0, 0.0, 0.0], dtype=np.float32)
        row = np.ones(cfg.total_width, dtype=np.float32)
        trace = forward(model, row)
        e = math.exp(1.0)
        expected = np.array([e / (e + 2), 1 / (e + 2), 1 / (e + 2)])
        assert np.allclose(trace.probabilities, expected, atol=1e-6)

    def test_inference_deterministic(self, rng):
        model = init_model(tiny_config("es+ms+ls"))
        row = rng.normal(size=model.config.total_width).astype(np.float32)
        t1 = forward(model, row, training_mode=False)
        t2 = forward(model, row, training_mode=False)
        assert np.array_equal(t1.probabilities, t2.probabilities)

    def test_training_mode_dropout_changes_output(self, rng):
        model = init_model(tiny_config("ls"))
        row = rng.normal(size=model.config.total_width).astype(np.float32)
        t1 = forward(model, row, training_mode=True, dropout_seed=1)
        t2 = forward(model, row, training_mode=True, dropout_seed=2)
        assert not np.array_equal(t1.probabilities, t2.probabilities)

    def test_singleton_attention_group_closed_form(self, rng):
        # One source per modality: the MS stage sees single-token groups.
        sources = (SourceSpec("v", "visual", 4), SourceSpec("a", "audio", 3))
        cfg = ModelConfig(
            sources=sources, num_classes=2, d_model=4, num_heads=1,
            fc_hidden=4, dropout_rate=0.0,
            attention_placement=frozenset({"MS"}), es_chunk_tokens=1, seed=3,
        )
        model = init_model(cfg)
        row = rng.normal(size=cfg.total_width).astype(np.float32)
        trace = forward(model, row)
        for weights in trace.attention["MS"]:
            assert np.array_equal(weights, np.ones_like(weights))
        p = model.params
        token_v = row[:4].astype(np.float32) @ p["proj.v.w"] + p["proj.v.b"]
        expected = token_v + (
            (token_v @ p["attn.ms.wv"] + p["attn.ms.bv"]) @ p["attn.ms.wo"]
            + p["attn.ms.bo"]
        )
        cache = trace.cache
        assert np.allclose(cache.tokens[0, 0], expected, atol=1e-5)

    def test_width_mismatch_rejected(self):
        model = init_model(tiny_config())
        with pytest.raises(ContractError, match="width"):
            forward(model, np.zeros(5, dtype=np.float32))

    def test_non_finite_input_rejected(self):
        model = init_model(tiny_config())
        row = np.zeros(model.config.total_width, dtype=np.float32)
        row[0] = np.nan
        with pytest.raises(ContractError, match="finite"):
            forward(model, row)

    def test_softmax_sums_to_one(self, rng):
        for variant in ATTENTION_VARIANTS:
            model = init_model(tiny_config(variant))
            X = rng.normal(size=(4, model.config.total_width))
            cache = forward_batch(model, X)
            assert np.abs(cache.probs.sum(axis=1) - 1).max() < 1e-6

    def test_attention_rows_stochastic(self, rng):
        for variant in ("es", "ms", "ls", "es+ms+ls"):
            model = init_model(tiny_config(variant))
            X = rng.normal(size=(3, model.config.total_width))
            cache = forward_batch(model, X)
            for weights in attention_weight_matrices(cache):
                sums = weights.sum(axis=-1)
                assert np.abs(sums - 1).max() < 1e-6


class TestLoss:
    def test_uniform_probabilities_loss_ln_c(self):
        cfg = tiny_config(variant="ns", double_fc=False, dropout_rate=0.0)
        model = init_model(cfg)
        for k in model.params:
            model.params[k][:] = 0
        X = np.ones((2, cfg.total_width), dtype=np.float32)
        loss = batch_loss(model, X, np.array([0, 1]), training_mode=False)
        assert loss == pytest.approx(math.log(3), abs=1e-6)

    def test_confident_correct_loss_near_zero(self):
        cfg = tiny_config(variant="ns", double_fc=False, dropout_rate=0.0)
        model = init_model(cfg)
        for k in model.params:
            model.params[k][:] = 0
        model.params["fc.b"][:] = np.array([50.0, 0.0, 0.0], dtype=np.float32)
        loss = batch_loss(
            model, np.ones((1, cfg.total_width), dtype=np.float32),
            np.array([0]), training_mode=False,
        )
        assert loss < 1e-6

    def test_empty_batch_rejected(self):
        model = init_model(tiny_config())
        with pytest.raises(ContractError, match="empty"):
            loss_and_gradients(
                model, np.zeros((0, model.config.total_width)), np.array([], dtype=int)
            )

    def test_label_out_of_range_rejected(self):
        model = init_model(tiny_config())
        X = np.zeros((1, model.config.total_width), dtype=np.float32)
        with pytest.raises(ContractError):
            loss_and_gradients(model, X, np.array([17]))


class TestGradients:
    @pytest.mark.parametrize("variant", sorted(ATTENTION_VARIANTS))
    @pytest.mark.parametrize("double_fc", [True, False])
    def test_matches_finite_differences(self, variant, double_fc, rng):
        cfg = tiny_config(variant, double_fc=double_fc, seed=29)
        model = init_model(cfg).astype(np.float64)
        X = rng.normal(size=(2, cfg.total_width))
        y = np.array([0, 2])
        worst = finite_difference_check(model, X, y)
        assert worst < 1e-4

    def test_gradient_shapes_match_params(self, rng):
        model = init_model(tiny_config("es+ms+ls"))
        X = rng.normal(size=(3, model.config.total_width)).astype(np.float32)
        _, grads = loss_and_gradients(model, X, np.array([0, 1, 2]))
        assert set(grads) == set(model.params)
        for k in grads:
            assert grads[k].shape == model.params[k].shape


class TestDropout:
    def test_expectation_matches_no_dropout(self, rng):
        """Inverted scaling: the seed-averaged dropped activation is unbiased."""
        cfg = tiny_config("ls", dropout_rate=0.3, fc_hidden=32)
        model = init_model(cfg)
        row = rng.normal(size=cfg.total_width).astype(np.float32)
        clean = forward(model, row, training_mode=False)
        h = clean.hidden.astype(np.float64)
        n_seeds = 10_000
        keep = 1.0 - cfg.dropout_rate
        # Aggregate the linear functional that feeds the final layer.
        weights = np.ones_like(h)
        target = float(weights @ h)
        samples = np.empty(n_seeds)
        mask_rngs = [np.random.default_rng(np.uint64(s)) for s in range(n_seeds)]
        for i, r in enumerate(mask_rngs):
            mask = (r.random(h.shape) >= cfg.dropout_rate) / keep
            samples[i] = float(weights @ (h * mask))
        mc_mean = samples.mean()
        mc_sigma = samples.std(ddof=1) / math.sqrt(n_seeds)
        assert abs(mc_mean - target) <= 3 * mc_sigma

    def test_model_dropout_matches_mask_recipe(self, rng):
        # The forward pass must use the same seeded mask construction.
        cfg = tiny_config("ls", dropout_rate=0.3)
        model = init_model(cfg)
        row = rng.normal(size=cfg.total_width).astype(np.float32)
        trace = forward(model, row, training_mode=True, dropout_seed=1234)
        mask_rng = np.random.default_rng(np.uint64(1234))
        mask = (mask_rng.random((1, cfg.fc_hidden)) >= 0.3).astype(np.float32) / np.float32(0.7)
        assert np.allclose(trace.dropped_hidden, trace.hidden * mask[0], atol=1e-6)


class TestWeightSerialization:
    def test_export_import_export_identical(self):
        model = init_model(tiny_config("es+ms+ls"))
        text = export_weights(model)
        again = export_weights(import_weights(model.config, text))
        assert text == again

    def test_round_trip_values_exact(self):
        model = init_model(tiny_config("ls"))
        restored = import_weights(model.config, export_weights(model))
        for k in model.params:
            assert np.array_equal(model.params[k], restored.params[k])

    def test_truncated_text_rejected(self):
        model = init_model(tiny_config())
        text = export_weights(model)
        truncated = "\n".join(text.splitlines()[:-2]) + "\n"
        with pytest.raises(FormatError):
            import_weights(model.config, truncated)

    def test_wrong_d_model_rejected(self):
        model = init_model(tiny_config(d_model=8))
        other = tiny_config(d_model=16, es_chunk_tokens=2)
        with pytest.raises(FormatError, match="shape"):
            import_weights(other, export_weights(model))

    def test_ordering_projections_then_stages_then_fc(self):
        cfg = tiny_config("es+ms+ls")
        names = list(parameter_shapes(cfg))
        assert names[0] == "proj.v1.w"
        assert names.index("attn.es.wq") < names.index("attn.ms.wq")
        assert names.index("attn.ms.wq") < names.index("attn.ls.wq")
        assert names.index("attn.ls.wq") < names.index("fc1.w")
        assert names[-1] == "fc2.b"

    def test_nine_significant_digits(self):
        model = init_model(tiny_config())
        line = export_weights(model).splitlines()[2]
        token = line.split()[0]
        mantissa = token.split("e")[0].replace("-", "").replace(".", "")
        assert len(mantissa) == 9
