"""Kernel values, Gram assembly, positive definiteness, export formats."""

import math

import numpy as np
import pytest

from swwl import (
    EmpiricalMeasure,
    KernelConfig,
    QuantileGrid,
    assemble_gram,
    assemble_gram_aniso,
    aswwl_kernel,
    check_psd,
    matern52,
    pq_embed,
    sample_projection_blocks,
    sample_projections,
    swwl_kernel,
    sw_estimate,
    tensorized_kernel,
)
from swwl.errors import LengthMismatchError, NonSymmetricError, ValidationError
from swwl.kernels import (
    GramMatrix,
    load_gram_binary,
    load_gram_text,
    save_gram_binary,
    save_gram_text,
    sw_squared_distances,
)


def dirac_pair(a, b, seed=0, p=3, q=4):
    """1-d point masses whose estimated distance is exactly |a-b|."""
    ps = sample_projections(seed, p, 1)
    grid = QuantileGrid(q)
    return (
        pq_embed(EmpiricalMeasure(np.array([[float(a)]])), ps, grid),
        pq_embed(EmpiricalMeasure(np.array([[float(b)]])), ps, grid),
    )


def random_embeddings(rng, n, s=2, p=4, q=5, seed=0):
    ps = sample_projections(seed, p, s)
    grid = QuantileGrid(q)
    return [
        pq_embed(
            EmpiricalMeasure(rng.standard_normal((int(rng.integers(1, 12)), s))),
            ps,
            grid,
            graph_id=f"g{i}",
        )
        for i in range(n)
    ]


class TestSwwlKernel:
    def test_identical_gives_one(self):
        a, _ = dirac_pair(0, 1)
        assert swwl_kernel(a, a, 0.5) == 1.0

    def test_unit_distance_hand_value(self):
        a, b = dirac_pair(0, 1)
        assert sw_estimate(a, b) == pytest.approx(1.0, abs=1e-12)
        assert swwl_kernel(a, b, 1.0) == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_large_precision_decays(self):
        a, b = dirac_pair(0, 1)
        assert swwl_kernel(a, b, 40.0) < 1e-10

    def test_gamma_must_be_positive(self):
        a, b = dirac_pair(0, 1)
        with pytest.raises(ValidationError):
            swwl_kernel(a, b, 0.0)


class TestAswwlKernel:
    def test_single_iteration_matches_plain_kernel(self):
        a, b = dirac_pair(0, 1)
        assert aswwl_kernel([a], [b], [0.7]) == swwl_kernel(a, b, 0.7)

    def test_product_of_two_factors(self):
        a0, b0 = dirac_pair(0, 1, seed=1)   # distance 1
        a1, b1 = dirac_pair(0, 2, seed=2)   # distance 2
        value = aswwl_kernel([a0, a1], [b0, b1], [1.0, 1.0])
        assert value == pytest.approx(math.exp(-(1.0 + 4.0)), rel=1e-12)

    def test_vanishing_precisions_give_one(self):
        a0, b0 = dirac_pair(0, 1)
        assert aswwl_kernel([a0], [b0], [1e-30]) == pytest.approx(1.0, abs=1e-12)

    def test_length_mismatch(self):
        a, b = dirac_pair(0, 1)
        with pytest.raises(LengthMismatchError):
            aswwl_kernel([a, a], [b], [1.0, 1.0])
        with pytest.raises(LengthMismatchError):
            aswwl_kernel([a], [b], [1.0, 1.0])


class TestMatern52:
    def test_zero_distance(self):
        assert matern52(0.0, 1.3) == 1.0

    def test_hand_value_at_lengthscale(self):
        want = (1 + math.sqrt(5) + 5.0 / 3.0) * math.exp(-math.sqrt(5))
        assert matern52(2.5, 2.5) == pytest.approx(want, rel=1e-12)
        assert want == pytest.approx(0.52399, abs=5e-6)

    def test_limit_and_monotonicity(self):
        grid = np.linspace(0.0, 50.0, 400)
        vals = matern52(grid, 1.0)
        assert vals[-1] < 1e-10
        assert np.all(np.diff(vals) < 0)
        assert np.all((vals > 0) & (vals <= 1.0))


class TestTensorized:
    def test_identical_records_give_variance(self):
        a, _ = dirac_pair(0, 1)
        cfg = KernelConfig(gamma=1.0, matern_lengthscales=(2.0,), variance=3.5)
        assert tensorized_kernel((a, [0.4]), (a, [0.4]), cfg) == pytest.approx(3.5)

    def test_empty_scalar_product(self):
        a, b = dirac_pair(0, 1)
        cfg = KernelConfig(gamma=2.0, variance=1.7)
        want = 1.7 * swwl_kernel(a, b, 2.0)
        assert tensorized_kernel((a, np.zeros(0)), (b, np.zeros(0)), cfg) == pytest.approx(want)

    def test_product_of_three_numbers(self):
        # graph factor 0.5, one Matern factor at its lengthscale, variance 2
        a, b = dirac_pair(0, 1)
        cfg = KernelConfig(gamma=math.log(2.0), matern_lengthscales=(1.0,), variance=2.0)
        m = matern52(1.0, 1.0)
        got = tensorized_kernel((a, [0.0]), (b, [1.0]), cfg)
        assert got == pytest.approx(2.0 * 0.5 * m, rel=1e-12)
        assert got == pytest.approx(m, rel=1e-12)

    def test_scalar_length_mismatch(self):
        a, b = dirac_pair(0, 1)
        cfg = KernelConfig(gamma=1.0, matern_lengthscales=(1.0,))
        with pytest.raises(LengthMismatchError):
            tensorized_kernel((a, [0.0, 1.0]), (b, [0.0, 1.0]), cfg)


class TestAssembleGram:
    def test_single_record(self):
        rng = np.random.default_rng(0)
        embs = random_embeddings(rng, 1)
        gram = assemble_gram(embs, None, KernelConfig(gamma=1.0, variance=2.0))
        np.testing.assert_allclose(gram.values, [[2.0]])
        with_nugget = assemble_gram(
            embs, None, KernelConfig(gamma=1.0, variance=2.0, nugget=0.25),
            nugget_on_diagonal=True,
        )
        np.testing.assert_allclose(with_nugget.values, [[2.25]])

    def test_duplicate_records(self):
        rng = np.random.default_rng(1)
        emb = random_embeddings(rng, 1)[0]
        gram = assemble_gram(
            [emb, emb], None, KernelConfig(gamma=1.0, nugget=0.1), nugget_on_diagonal=True
        )
        assert gram.values[0, 1] == pytest.approx(1.0)
        assert gram.values[0, 0] == pytest.approx(1.1)
        assert gram.values[1, 1] == pytest.approx(1.1)

    def test_matches_scalar_kernel_entrywise(self):
        rng = np.random.default_rng(2)
        embs = random_embeddings(rng, 6)
        scalars = rng.standard_normal((6, 2))
        cfg = KernelConfig(gamma=0.8, matern_lengthscales=(1.0, 2.5), variance=1.4)
        gram = assemble_gram(embs, scalars, cfg)
        for i in range(6):
            for j in range(6):
                want = tensorized_kernel((embs[i], scalars[i]), (embs[j], scalars[j]), cfg)
                assert gram.values[i, j] == pytest.approx(want, rel=1e-12)

    def test_symmetry_exact_and_bounds(self):
        rng = np.random.default_rng(3)
        embs = random_embeddings(rng, 10)
        cfg = KernelConfig(gamma=1.2, variance=2.0)
        gram = assemble_gram(embs, None, cfg)
        assert np.array_equal(gram.values, gram.values.T)
        assert np.all(gram.values > 0)
        assert np.all(gram.values <= 2.0 + 1e-15)
        np.testing.assert_allclose(np.diag(gram.values), 2.0)

    def test_random_gram_is_psd(self):
        rng = np.random.default_rng(4)
        embs = random_embeddings(rng, 20, s=3, p=5, q=6)
        gram = assemble_gram(embs, None, KernelConfig(gamma=2.0))
        report = check_psd(gram)
        assert report.min_eigenvalue >= -1e-8 * report.trace
        assert report.is_psd

    def test_aniso_gram_matches_kernel_and_is_psd(self):
        rng = np.random.default_rng(5)
        blocks = sample_projection_blocks(7, 4, 2, 3)
        grid = QuantileGrid(5)
        per_iter = [
            [
                pq_embed(
                    EmpiricalMeasure(rng.standard_normal((int(rng.integers(1, 9)), 2))),
                    blocks[h],
                    grid,
                    graph_id=f"g{i}",
                )
                for i in range(8)
            ]
            for h in range(3)
        ]
        gammas = np.array([0.5, 1.0, 2.0])
        gram = assemble_gram_aniso(per_iter, gammas)
        for i in range(8):
            for j in range(8):
                want = aswwl_kernel(
                    [per_iter[h][i] for h in range(3)],
                    [per_iter[h][j] for h in range(3)],
                    gammas,
                )
                assert gram.values[i, j] == pytest.approx(want, rel=1e-12)
        assert check_psd(gram).is_psd

    def test_distance_cache_equals_direct_assembly(self):
        rng = np.random.default_rng(6)
        embs = random_embeddings(rng, 7)
        gamma = 1.7
        d2 = sw_squared_distances(embs)
        direct = assemble_gram(embs, None, KernelConfig(gamma=gamma)).values
        np.testing.assert_allclose(np.exp(-gamma * d2), direct, rtol=1e-15)


def test_assembly_time_tracks_embedding_width():
    # doubling the projection count doubles the feature width and should
    # roughly double the pairwise-assembly cost (generous bounds, medians)
    import time

    rng = np.random.default_rng(42)
    grid = QuantileGrid(200)
    supports = [rng.standard_normal((40, 3)) for _ in range(80)]

    def assembly_time(n_proj):
        ps = sample_projections(0, n_proj, 3)
        embs = [
            pq_embed(EmpiricalMeasure(s), ps, grid, graph_id=str(i))
            for i, s in enumerate(supports)
        ]
        reps = []
        for _ in range(5):
            t0 = time.perf_counter()
            assemble_gram(embs, None, KernelConfig(gamma=1.0))
            reps.append(time.perf_counter() - t0)
        return float(np.median(reps))

    assembly_time(16)  # warmup
    ratio = assembly_time(64) / assembly_time(32)
    assert 1.3 <= ratio <= 3.2


class TestCheckPsd:
    def test_identity(self):
        report = check_psd(GramMatrix(np.eye(3), ("a", "b", "c")))
        assert report.min_eigenvalue == pytest.approx(1.0)
        assert report.is_psd

    def test_hand_indefinite(self):
        # eigenvalues 3 and -1
        report = check_psd(GramMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]), ("a", "b")))
        assert report.min_eigenvalue == pytest.approx(-1.0)
        assert not report.is_psd

    def test_non_symmetric_rejected(self):
        with pytest.raises(NonSymmetricError):
            check_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestGramFiles:
    def test_text_round_trip_17_digits(self, tmp_path):
        rng = np.random.default_rng(7)
        embs = random_embeddings(rng, 5)
        gram = assemble_gram(embs, None, KernelConfig(gamma=1.0))
        path = tmp_path / "gram.txt"
        save_gram_text(gram, path)
        first = path.read_text().splitlines()[0].split()
        assert first[0] == "5"
        back = load_gram_text(path)
        assert np.array_equal(back.values, gram.values)
        assert back.fingerprint["seed"] == gram.fingerprint["seed"]
        assert back.fingerprint["projections"] == gram.fingerprint["projections"]
        assert back.fingerprint["quantiles"] == gram.fingerprint["quantiles"]
        assert back.fingerprint["gamma"] == gram.fingerprint["gamma"]

    def test_binary_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        embs = random_embeddings(rng, 4)
        gram = assemble_gram(embs, None, KernelConfig(gamma=0.3))
        path = tmp_path / "gram.bin"
        save_gram_binary(gram, path)
        back = load_gram_binary(path)
        assert np.array_equal(back.values, gram.values)
        assert back.row_ids == gram.row_ids
        assert back.fingerprint == gram.fingerprint
