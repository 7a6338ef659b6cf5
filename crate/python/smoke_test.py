"""Smoke test for the ttadapt extension module.

Build and install first, e.g. `cd python && maturin develop --release`.
"""

import math

import ttadapt


def main():
    loss = ttadapt.Loss("conj:exp")
    assert (loss.rule, loss.family) == ("conj", "exp")
    assert loss.club() == (1.0, 0.75)
    assert abs(loss.dpsi(1.0) + math.tanh(1.0) / math.cosh(1.0)) < 1e-12
    assert len(ttadapt.Loss.all()) == 6

    mu_t, sigma_t, w_init = ttadapt.build_appendix_b_model(10, 0)
    model = ttadapt.GaussianModel(mu_t, sigma_t)
    assert abs(model.zero_one_loss(w_init) - 0.2) < 1e-3
    assert abs(model.best_error() - 0.1) < 1e-3

    out = ttadapt.run(model, loss, eta=0.5, horizon=200, batch=32, seed=1)
    assert len(out["loss01"]) == 201 and not out["overflow"]
    assert out["loss01"][-1] < out["loss01"][0]

    noiseless = ttadapt.GaussianModel.axis_aligned(2, 1.0, 0.0)
    pop = ttadapt.run(noiseless, ttadapt.Loss("conj:square"), eta=1.0, horizon=10,
                      mode="population", w_init=[1.0, 1.0])
    assert abs(pop["r"][-1] - 2.0 ** 10) < 1e-9

    noisy = ttadapt.GaussianModel.axis_aligned(2, 1.0, 0.5)
    try:
        ttadapt.run(noisy, ttadapt.Loss("hard:exp"), eta=1.0, horizon=5, mode="population")
    except NotImplementedError as e:
        assert "unsupported" in str(e)
    else:
        raise AssertionError("expected NotImplementedError")

    try:
        ttadapt.run(model, loss, eta=0.0, horizon=5)
    except ValueError as e:
        assert "eta must be positive" in str(e)
    else:
        raise AssertionError("expected ValueError")

    assert ttadapt.verify_club(loss)["passed"]
    assert not ttadapt.verify_club(ttadapt.Loss("hard:exp"), l=0.5, a_max=50.0)["passed"]
    _, holds, tau, _ = ttadapt.lemma_recursion_run(1.0, 1.0, 1.0, 1000)
    assert holds and tau == 0.0
    assert len(ttadapt.ETA_GRID) == 11
    print("ttadapt", ttadapt.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
