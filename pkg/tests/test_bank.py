import numpy as np
import pytest
from scipy import sparse

from resad.bank import (
    CompressedBank,
    MemoryBank,
    collect_features,
    coreset_select,
    fit_projection,
    jl_dimension,
    load_bank,
    save_bank,
)
from resad.errors import (
    ConfigFingerprintMismatch,
    EmptyInput,
    InvalidConfig,
    ShapeError,
    VersionMismatch,
)


def make_bank(n, c, seed=0):
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((n, c)).astype(np.float32)
    provenance = np.zeros((n, 3), dtype=np.int64)
    provenance[:, 1] = np.arange(n)
    return MemoryBank(vectors, provenance, (n, 1), 1)


def greedy_oracle(points, m, start=0):
    """Naive O(n²·m) k-center: full pairwise distances, ties to lowest index."""
    n = points.shape[0]
    pts = points.astype(np.float64)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    order = [start]
    min_d2 = d2[start].copy()
    for _ in range(1, m):
        pick = int(np.argmax(min_d2))
        order.append(pick)
        min_d2 = np.minimum(min_d2, d2[pick])
    return order


class TestCollectFeatures:
    def test_scan_order_single_map(self):
        fmap = np.arange(12, dtype=np.float32).reshape(2, 2, 3)
        bank = collect_features([fmap])
        assert bank.vectors.shape == (4, 3)
        assert np.array_equal(bank.vectors, fmap.reshape(4, 3))
        assert bank.provenance.tolist() == [
            [0, 0, 0], [0, 0, 1], [0, 1, 0], [0, 1, 1],
        ]

    def test_row_count_over_images(self):
        maps = [np.zeros((3, 4, 2), dtype=np.float32) for _ in range(5)]
        bank = collect_features(maps)
        assert bank.vectors.shape == (5 * 12, 2)
        assert bank.image_count == 5
        assert bank.provenance[:, 0].tolist() == sum(([k] * 12 for k in range(5)), [])

    def test_mismatched_channels(self):
        with pytest.raises(ShapeError):
            collect_features([np.zeros((2, 2, 3)), np.zeros((2, 2, 4))])

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            collect_features([])


class TestProjection:
    def test_jl_dimension_published_scale(self):
        # 134 maps of 98x98 positions at distortion 0.9
        assert jl_dimension(134 * 98 * 98, 0.9) == 348

    def test_dimension_clamped_to_channels(self):
        bank = make_bank(8, 4)
        proj = fit_projection(bank, eps=0.3, seed=0)
        assert proj.dim == 4  # JL bound far exceeds c, clamped

    def test_nonzero_values_are_signed_scale(self):
        bank = make_bank(50, 64)
        proj = fit_projection(bank, eps=0.9, seed=1)
        dense = proj.matrix.toarray()
        scale = np.sqrt(1.0 / (proj.dim * proj.density))
        nonzero = dense[dense != 0]
        assert nonzero.size > 0
        assert np.allclose(np.abs(nonzero), scale, atol=1e-6)

    def test_density_roughly_matches(self):
        bank = make_bank(5000, 256, seed=2)
        proj = fit_projection(bank, eps=0.9, seed=2)
        dense = proj.matrix.toarray()
        observed = (dense != 0).mean()
        assert observed == pytest.approx(proj.density, rel=0.25)

    def test_seed_determinism(self):
        bank = make_bank(100, 32)
        a = fit_projection(bank, eps=0.9, seed=7)
        b = fit_projection(bank, eps=0.9, seed=7)
        assert (a.matrix != b.matrix).nnz == 0

    def test_distance_preservation_statistical(self):
        rng = np.random.default_rng(3)
        n, c = 4000, 512
        bank = make_bank(n, c, seed=3)
        proj = fit_projection(bank, eps=0.9, seed=3)
        idx = rng.integers(0, n, size=(400, 2))
        keep = idx[:, 0] != idx[:, 1]
        idx = idx[keep]
        orig = np.linalg.norm(
            bank.vectors[idx[:, 0]] - bank.vectors[idx[:, 1]], axis=1
        )
        projected = proj.apply(bank.vectors)
        proj_d = np.linalg.norm(projected[idx[:, 0]] - projected[idx[:, 1]], axis=1)
        ratio = (proj_d / orig) ** 2
        within = np.mean((ratio >= 1 - 0.9) & (ratio <= 1 + 0.9))
        assert within >= 0.95

    def test_invalid_eps(self):
        bank = make_bank(10, 4)
        for eps in [0.0, 1.0, -0.2]:
            with pytest.raises(InvalidConfig):
                fit_projection(bank, eps=eps, seed=0)


class TestCoresetSelect:
    def test_fraction_one_selects_everything(self):
        bank = make_bank(20, 6)
        proj = fit_projection(bank, eps=0.9, seed=0)
        cbank = coreset_select(bank, proj, fraction=1.0)
        assert np.array_equal(cbank.selected_indices, np.arange(20))
        assert np.array_equal(cbank.vectors, bank.vectors)

    def test_unit_square_picks_diagonal_corner(self):
        vectors = np.array(
            [[0, 0], [1, 0], [0, 1], [1, 1]], dtype=np.float32
        )
        bank = MemoryBank(vectors, np.zeros((4, 3), np.int64), (4, 1), 1)
        # identity-like projection: keep both coordinates
        proj = fit_projection(bank, eps=0.5, seed=0)
        proj.matrix = sparse.eye(2, format="csr", dtype=np.float32)
        cbank = coreset_select(bank, proj, fraction=0.5)
        assert cbank.selection_order.tolist() == [0, 3]

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(4)
        for trial in range(10):
            n = int(rng.integers(20, 200))
            d = int(rng.integers(2, 8))
            bank = make_bank(n, d, seed=100 + trial)
            proj = fit_projection(bank, eps=0.9, seed=trial)
            cbank = coreset_select(bank, proj, fraction=0.25)
            projected = proj.apply(bank.vectors)
            expected = greedy_oracle(projected, len(cbank.selection_order))
            assert cbank.selection_order.tolist() == expected

    def test_seeded_random_start(self):
        bank = make_bank(50, 8)
        proj = fit_projection(bank, eps=0.9, seed=0)
        a = coreset_select(bank, proj, fraction=0.2, seed=123)
        b = coreset_select(bank, proj, fraction=0.2, seed=123)
        assert np.array_equal(a.selection_order, b.selection_order)
        default = coreset_select(bank, proj, fraction=0.2)
        assert default.selection_order[0] == 0

    def test_covering_radius_monotone_in_m(self):
        bank = make_bank(300, 6, seed=5)
        proj = fit_projection(bank, eps=0.9, seed=5)
        projected = proj.apply(bank.vectors).astype(np.float64)
        radii = []
        for fraction in [0.05, 0.1, 0.2, 0.4]:
            cbank = coreset_select(bank, proj, fraction=fraction)
            chosen = projected[cbank.selected_indices]
            d2 = ((projected[:, None, :] - chosen[None, :, :]) ** 2).sum(axis=2)
            radii.append(np.sqrt(d2.min(axis=1).max()))
        assert all(a >= b - 1e-9 for a, b in zip(radii, radii[1:]))

    def test_selected_rows_are_original_space(self):
        bank = make_bank(40, 8, seed=6)
        proj = fit_projection(bank, eps=0.9, seed=6)
        cbank = coreset_select(bank, proj, fraction=0.3)
        assert np.array_equal(cbank.vectors, bank.vectors[cbank.selected_indices])

    def test_invalid_fraction(self):
        bank = make_bank(10, 4)
        proj = fit_projection(bank, eps=0.9, seed=0)
        for fraction in [0.0, 1.5, -0.1]:
            with pytest.raises(InvalidConfig):
                coreset_select(bank, proj, fraction=fraction)


FINGERPRINT = {"backbone_sha256": "abc", "side": 224, "region_radius": 12,
               "use_region": True, "use_spatial": True}


def compressed_fixture(seed=0):
    bank = make_bank(60, 8, seed=seed)
    proj = fit_projection(bank, eps=0.9, seed=seed)
    return coreset_select(bank, proj, fraction=0.25)


class TestPersistence:
    def test_round_trip_bitwise(self, tmp_path):
        cbank = compressed_fixture()
        path = tmp_path / "bank.rsft"
        save_bank(cbank, path, FINGERPRINT)
        loaded = load_bank(path, FINGERPRINT)
        assert np.array_equal(
            loaded.vectors.view(np.uint32), cbank.vectors.view(np.uint32)
        )
        assert np.array_equal(loaded.selected_indices, cbank.selected_indices)
        assert np.array_equal(loaded.selection_order, cbank.selection_order)
        assert loaded.coreset_fraction == cbank.coreset_fraction
        assert loaded.map_shape == cbank.map_shape

    def test_fingerprint_mismatch(self, tmp_path):
        cbank = compressed_fixture()
        path = tmp_path / "bank.rsft"
        save_bank(cbank, path, FINGERPRINT)
        other = dict(FINGERPRINT, backbone_sha256="different")
        with pytest.raises(ConfigFingerprintMismatch):
            load_bank(path, other)

    def test_no_fingerprint_check_when_omitted(self, tmp_path):
        cbank = compressed_fixture()
        path = tmp_path / "bank.rsft"
        save_bank(cbank, path, FINGERPRINT)
        load_bank(path)  # no expected fingerprint: loads fine

    def test_truncated_file(self, tmp_path):
        cbank = compressed_fixture()
        path = tmp_path / "bank.rsft"
        save_bank(cbank, path, FINGERPRINT)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(VersionMismatch):
            load_bank(path)

    def test_missing_sidecar(self, tmp_path):
        cbank = compressed_fixture()
        path = tmp_path / "bank.rsft"
        save_bank(cbank, path, FINGERPRINT)
        (tmp_path / "bank.meta.json").unlink()
        with pytest.raises(VersionMismatch):
            load_bank(path)
