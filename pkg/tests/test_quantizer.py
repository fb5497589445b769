import numpy as np
import pytest

from tokcast.quantizer import (
    Grid,
    TimeSeries,
    TokenizedSeries,
    build_grid,
    decode_tokens,
    detokenize,
    encode_series,
    fit_scale,
    tokenize,
)


@pytest.fixture
def small_grid():
    return build_grid(d=5, y_min=-2.0, y_max=2.0)


@pytest.fixture
def paper_grid():
    return build_grid()  # d=4094 on [-15, 15]


class TestFitScale:
    def test_mean_absolute(self):
        assert fit_scale([1.0, -2.0, 3.0]) == 2.0

    def test_zero_series_fallback(self):
        assert fit_scale([0.0, 0.0, 0.0]) == 1.0

    def test_single_element(self):
        assert fit_scale([5.0]) == 5.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty series"):
            fit_scale([])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            fit_scale([1.0, np.nan])


class TestBuildGrid:
    def test_default_grid_spacing(self):
        grid = build_grid()
        assert grid.d == 4094
        assert grid.r == pytest.approx(30.0 / 4093)
        assert round(grid.r, 4) == 0.0073
        assert grid.vocab_size == 4096
        assert grid.pad_token == 4094
        assert grid.eos_token == 4095

    def test_small_grid_layout(self, small_grid):
        np.testing.assert_array_equal(small_grid.centroids, [-2.0, -1.0, 0.0, 1.0, 2.0])
        np.testing.assert_array_equal(small_grid.boundaries, [-1.5, -0.5, 0.5, 1.5])
        assert small_grid.r == 1.0

    def test_smallest_legal_grid(self):
        grid = build_grid(d=2, y_min=0.0, y_max=1.0)
        np.testing.assert_array_equal(grid.centroids, [0.0, 1.0])
        np.testing.assert_array_equal(grid.boundaries, [0.5])
        assert grid.r == 1.0

    def test_invalid_configs_rejected(self):
        with pytest.raises(ValueError):
            build_grid(d=1, y_min=0.0, y_max=1.0)
        with pytest.raises(ValueError):
            build_grid(d=4, y_min=1.0, y_max=1.0)
        with pytest.raises(ValueError):
            build_grid(d=4, y_min=2.0, y_max=-2.0)

    def test_centroid_formula_within_4_ulps(self, paper_grid):
        i = np.arange(paper_grid.d, dtype=np.float64)
        exact = paper_grid.y_min + i * (paper_grid.y_max - paper_grid.y_min) / (paper_grid.d - 1)
        err = np.abs(paper_grid.centroids - exact)
        # ulps at the magnitude of the summands: y_min + i*r cancels near the
        # middle of the grid, so the result's own ulp is not a usable yardstick
        scale = np.maximum(np.abs(exact), abs(paper_grid.y_min))
        assert np.all(err <= 4 * np.spacing(scale))

    def test_boundaries_are_midpoints(self, paper_grid):
        mids = 0.5 * (paper_grid.centroids[:-1] + paper_grid.centroids[1:])
        np.testing.assert_array_equal(paper_grid.boundaries, mids)
        assert np.all(np.diff(paper_grid.boundaries) > 0)


class TestTokenize:
    def test_interior_value(self, small_grid):
        assert tokenize(0.3, small_grid) == 2

    def test_clamps_below(self, small_grid):
        assert tokenize(-100.0, small_grid) == 0

    def test_clamps_above(self, small_grid):
        assert tokenize(100.0, small_grid) == 4

    def test_boundary_tie_goes_up(self, small_grid):
        assert tokenize(-0.5, small_grid) == 2
        assert tokenize(0.5, small_grid) == 3
        assert tokenize(1.5, small_grid) == 4

    def test_non_finite_rejected(self, small_grid):
        with pytest.raises(ValueError):
            tokenize(np.nan, small_grid)
        with pytest.raises(ValueError):
            tokenize(np.inf, small_grid)

    def test_array_input(self, small_grid):
        out = tokenize(np.array([0.3, -100.0, -0.5]), small_grid)
        np.testing.assert_array_equal(out, [2, 0, 2])
        assert out.dtype == np.int64

    def test_monotone_on_sorted_sweep(self, paper_grid):
        ys = np.sort(np.random.default_rng(0).uniform(-20, 20, size=20_000))
        toks = tokenize(ys, paper_grid)
        assert np.all(np.diff(toks) >= 0)

    def test_covers_full_range_at_centroids(self, small_grid, paper_grid):
        for grid in (small_grid, paper_grid):
            np.testing.assert_array_equal(
                tokenize(grid.centroids, grid), np.arange(grid.d))


class TestDetokenize:
    def test_first_centroid(self, small_grid):
        assert detokenize(0, small_grid) == -2.0

    def test_center_centroid(self, small_grid):
        assert detokenize(2, small_grid) == 0.0

    def test_last_paper_centroid(self, paper_grid):
        assert detokenize(4093, paper_grid) == 15.0

    def test_out_of_range_rejected(self, small_grid):
        with pytest.raises(ValueError):
            detokenize(5, small_grid)
        with pytest.raises(ValueError):
            detokenize(-1, small_grid)


class TestRoundTrip:
    def test_paper_grid_halfwidth_bound(self, paper_grid):
        ys = np.random.default_rng(7).uniform(paper_grid.y_min, paper_grid.y_max, size=100_000)
        back = detokenize(tokenize(ys, paper_grid), paper_grid)
        assert np.max(np.abs(back - ys)) <= paper_grid.r / 2

    def test_random_grids(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            lo = rng.uniform(-10, 0)
            hi = lo + rng.uniform(0.5, 20)
            grid = build_grid(d=int(rng.integers(2, 300)), y_min=lo, y_max=hi)
            ys = rng.uniform(lo, hi, size=500)
            back = detokenize(tokenize(ys, grid), grid)
            assert np.max(np.abs(back - ys)) <= grid.r / 2 * (1 + 1e-12)


class TestEncodeSeries:
    def test_worked_example(self, small_grid):
        # scale (2+4+6)/3 = 4, scaled values [0.5, -1, 1.5]; 0.5 and 1.5 sit
        # exactly on boundaries and the tie goes to the upper cell
        ts = TimeSeries(id="s", values=[2.0, -4.0, 6.0])
        enc = encode_series(ts, small_grid, scale_from=ts.values)
        assert enc.scale == 4.0
        np.testing.assert_array_equal(enc.tokens, [3, 1, 4])

    def test_zero_series(self, small_grid):
        ts = TimeSeries(id="z", values=[0.0, 0.0, 0.0, 0.0])
        enc = encode_series(ts, small_grid, scale_from=ts.values)
        assert enc.scale == 1.0
        np.testing.assert_array_equal(enc.tokens, [2, 2, 2, 2])

    def test_round_trip_within_scaled_halfwidth(self):
        grid = build_grid(d=257, y_min=-6.0, y_max=6.0)
        rng = np.random.default_rng(3)
        for _ in range(50):
            values = rng.normal(scale=rng.uniform(0.1, 50), size=rng.integers(5, 200))
            ts = TimeSeries(id="r", values=values)
            enc = encode_series(ts, grid, scale_from=values)
            back = decode_tokens(enc.tokens, grid, enc.scale)
            in_range = np.abs(values / enc.scale) <= grid.y_max
            err = np.abs(back - values)[in_range]
            assert np.all(err <= enc.scale * grid.r / 2 * (1 + 1e-12))

    def test_scale_equivariance(self, paper_grid):
        rng = np.random.default_rng(5)
        values = rng.normal(size=100)
        base = encode_series(TimeSeries(id="a", values=values), paper_grid, values)
        for alpha in (0.25, 2.0, 3.0, 1024.0):
            scaled = alpha * values
            enc = encode_series(TimeSeries(id="b", values=scaled), paper_grid, scaled)
            np.testing.assert_array_equal(enc.tokens, base.tokens)

    def test_scale_never_fit_on_test(self, small_grid):
        # identical context, different futures -> identical scale and tokens
        train = np.array([1.0, 2.0, 3.0])
        full_a = TimeSeries(id="a", values=np.r_[train, 100.0])
        full_b = TimeSeries(id="b", values=np.r_[train, -0.5])
        enc_a = encode_series(full_a, small_grid, scale_from=train)
        enc_b = encode_series(full_b, small_grid, scale_from=train)
        assert enc_a.scale == enc_b.scale == 2.0
        np.testing.assert_array_equal(enc_a.tokens[:3], enc_b.tokens[:3])


class TestTypes:
    def test_time_series_validation(self):
        with pytest.raises(ValueError):
            TimeSeries(id="x", values=[])
        with pytest.raises(ValueError):
            TimeSeries(id="x", values=[1.0, np.inf])
        with pytest.raises(ValueError):
            TimeSeries(id="x", values=[1.0], horizon=0)
        with pytest.raises(ValueError):
            TimeSeries(id="x", values=[1.0], season_length=0)

    def test_tokenized_series_validation(self, small_grid):
        with pytest.raises(ValueError):
            TokenizedSeries(tokens=[0, 5], scale=1.0, grid_ref=small_grid)
        with pytest.raises(ValueError):
            TokenizedSeries(tokens=[0, 1], scale=0.0, grid_ref=small_grid)
        ok = TokenizedSeries(tokens=[0, 4], scale=2.5, grid_ref=small_grid)
        assert len(ok) == 2
