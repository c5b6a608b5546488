import numpy as np
import pytest

from voxmae.tokenizer import (
    PosEmbedParams,
    TokenizerConfig,
    build_patches,
    dense_reference_embed,
    embed_tokens,
    embed_tokens_batch,
    graph_features,
    partition,
    positional_embed,
    swi_index,
    tokenize,
    voxel_indices,
    voxelize,
)
from voxmae.types import Patch, PointCloud, RawPatch, WeightTable

from conftest import make_cloud, random_cloud

PAPER_CFG = TokenizerConfig()  # s=1/224, S=224, a=16


class TestVoxelize:
    def test_origin(self):
        grid = voxelize(make_cloud([[0.0, 0.0, 0.0]]), PAPER_CFG)
        np.testing.assert_array_equal(grid.coords, [[0, 0, 0]])

    def test_half_maps_to_112(self):
        grid = voxelize(make_cloud([[0.5, 0.5, 0.5]]), PAPER_CFG)
        np.testing.assert_array_equal(grid.coords, [[112, 112, 112]])

    def test_one_clamps_to_space_edge(self):
        grid = voxelize(make_cloud([[1.0, 1.0, 1.0]]), PAPER_CFG)
        np.testing.assert_array_equal(grid.coords, [[223, 223, 223]])

    def test_dedup_keeps_max_feature_sum(self):
        # Two points in the same voxel: sums 2.1 vs 1.5.
        pts = np.array(
            [
                [0.001, 0.001, 0.001, 0.5, 0.5, 0.5],  # sum ~1.5
                [0.002, 0.002, 0.002, 0.7, 0.7, 0.7],  # sum ~2.1
            ]
        )
        grid = voxelize(PointCloud(points=pts), PAPER_CFG)
        assert grid.count == 1
        np.testing.assert_array_equal(grid.features[0], pts[1])

    def test_dedup_tie_takes_smallest_index(self):
        pts = np.array(
            [
                [0.001, 0.001, 0.001, 0.5, 0.5, 0.5],
                [0.001, 0.001, 0.001, 0.5, 0.5, 0.5],
            ]
        )
        pts[1, 3:] = [0.5, 0.4, 0.6]  # same sum, different content
        grid = voxelize(PointCloud(points=pts), PAPER_CFG)
        assert grid.count == 1
        np.testing.assert_array_equal(grid.features[0], pts[0])

    def test_m_at_most_n_and_unique_sorted(self):
        pc = random_cloud(500, 3)
        grid = voxelize(pc, PAPER_CFG)
        assert grid.count <= pc.count
        as_tuples = [tuple(c) for c in grid.coords]
        assert as_tuples == sorted(set(as_tuples))

    def test_coords_match_equation_after_clamp(self):
        pc = random_cloud(300, 4)
        grid = voxelize(pc, PAPER_CFG)
        expect = np.clip(
            voxel_indices(grid.features[:, :3], PAPER_CFG.voxel_size),
            0,
            PAPER_CFG.space_size - 1,
        )
        np.testing.assert_array_equal(grid.coords, expect)

    def test_scale_equivariance_of_discretization(self, rng):
        coords = rng.uniform(0.0, 1.0, size=(200, 3))
        s = 1.0 / 224.0
        for lam in (0.5, 2.0, 8.0, 1024.0):
            np.testing.assert_array_equal(
                voxel_indices(coords * lam, s * lam), voxel_indices(coords, s)
            )


class TestPartition:
    def test_floor_to_multiple_of_16(self):
        pc = make_cloud([[17.5 / 224.0, 17.5 / 224.0, 0.5 / 224.0]])
        grid = voxelize(pc, PAPER_CFG)
        np.testing.assert_array_equal(grid.coords, [[17, 17, 0]])
        patches = partition(grid, 16)
        assert len(patches) == 1
        np.testing.assert_array_equal(patches[0].position, [16, 16, 0])

    def test_same_block_groups_together(self):
        pc = make_cloud(
            [
                [0.5 / 224.0, 0.5 / 224.0, 0.5 / 224.0],
                [15.5 / 224.0, 15.5 / 224.0, 15.5 / 224.0],
            ]
        )
        patches = partition(voxelize(pc, PAPER_CFG), 16)
        assert len(patches) == 1
        assert patches[0].features.shape[0] == 2

    def test_empty_grid(self):
        pc = make_cloud([[0.0, 0.0, 0.0]])
        grid = voxelize(pc, PAPER_CFG)
        empty = type(grid)(
            coords=np.zeros((0, 3), dtype=np.int64),
            features=np.zeros((0, 6)),
            voxel_size=grid.voxel_size,
            space_size=grid.space_size,
        )
        assert partition(empty, 16) == []

    def test_lexicographic_patch_order_and_cell_sort(self):
        pc = random_cloud(2000, 5)
        patches = partition(voxelize(pc, PAPER_CFG), 16)
        positions = [tuple(p.position) for p in patches]
        assert positions == sorted(positions)
        for p in patches:
            assert np.all(np.diff(p.cells) > 0)  # distinct and ascending

    def test_patch_count_bounds(self):
        cfg = TokenizerConfig.desk()
        pc = random_cloud(3000, 6)
        grid = voxelize(pc, cfg)
        patches = partition(grid, cfg.patch_size)
        assert len(patches) <= min(grid.count, cfg.patches_per_axis**3)
        assert sum(p.features.shape[0] for p in patches) == grid.count


class TestGraphFeatures:
    def test_single_voxel(self):
        raw = RawPatch(
            position=np.array([0, 0, 0]),
            features=np.array([[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]]),
            cells=np.array([0]),
        )
        p = graph_features(raw)
        np.testing.assert_allclose(p.features[0, 6:9], [0.0, 0.0, 0.0])
        np.testing.assert_allclose(p.features[0, 9:12], [0.1, 0.2, 0.3])

    def test_two_voxel_hand_example(self):
        raw = RawPatch(
            position=np.array([0, 0, 0]),
            features=np.array(
                [
                    [0.1, 0.2, 0.3, 0.0, 0.0, 0.0],
                    [0.3, 0.2, 0.1, 0.0, 0.0, 0.0],
                ]
            ),
            cells=np.array([0, 1]),
        )
        p = graph_features(raw)
        np.testing.assert_allclose(p.features[:, 9:12], [[0.2, 0.2, 0.2]] * 2)
        np.testing.assert_allclose(p.features[0, 6:9], [-0.1, 0.0, 0.1])
        np.testing.assert_allclose(p.features[1, 6:9], [0.1, 0.0, -0.1])

    def test_feature_order_and_edge_sum(self, rng):
        pc = random_cloud(800, 11)
        for p in build_patches(voxelize(pc, PAPER_CFG), 16):
            np.testing.assert_array_equal(p.features[:, :6], p.features[:, :6])
            np.testing.assert_allclose(
                p.features[:, 6:9].sum(axis=0), np.zeros(3), atol=1e-9
            )
            np.testing.assert_allclose(
                p.features[:, :3] - p.features[:, 9:12], p.features[:, 6:9]
            )


class TestSwiIndex:
    def test_origin(self):
        for a in (1, 2, 4, 16):
            assert swi_index(0, 0, 0, a) == 0

    def test_hand_values(self):
        assert swi_index(17, 17, 0, 16) == 17
        assert swi_index(15, 15, 15, 16) == 4095

    @pytest.mark.parametrize("a", [1, 2, 4, 16])
    def test_bijective_on_one_patch(self, a):
        m, n, q = np.meshgrid(np.arange(a), np.arange(a), np.arange(a), indexing="ij")
        d = swi_index(m.ravel() + 3 * a, n.ravel() + 5 * a, q.ravel() + 7 * a, a)
        assert sorted(d.tolist()) == list(range(a**3))


def patch_of(features, cells, position=(0, 0, 0)) -> Patch:
    return Patch(
        position=np.asarray(position),
        features=np.asarray(features, dtype=np.float64),
        cells=np.asarray(cells, dtype=np.int64),
    )


class TestEmbedTokens:
    def test_zero_weights_zero_tokens(self, rng):
        table = WeightTable.zeros(2, 5)
        p = patch_of(rng.uniform(size=(3, 12)), [0, 3, 7])
        ts = embed_tokens([p], table)
        np.testing.assert_array_equal(ts.tokens, np.zeros((1, 5)))

    def test_all_ones_times_half_column(self):
        table = WeightTable(weights=np.full((8, 12, 1), 0.5), patch_size=2, embed_dim=1)
        p = patch_of(np.ones((1, 12)), [4])
        ts = embed_tokens([p], table)
        np.testing.assert_allclose(ts.tokens, [[6.0]])

    def test_duplicate_patch_identical_rows(self, rng):
        table = WeightTable.random(2, 4, seed=0)
        p = patch_of(rng.uniform(size=(2, 12)), [1, 6])
        ts = embed_tokens([p, p], table)
        np.testing.assert_array_equal(ts.tokens[0], ts.tokens[1])

    def test_cell_out_of_range(self, rng):
        table = WeightTable.random(2, 4, seed=0)
        p = patch_of(rng.uniform(size=(1, 12)), [8])
        with pytest.raises(ValueError, match="out of range"):
            embed_tokens([p], table)

    def test_batched_matches_sequential(self):
        cfg = TokenizerConfig.desk()
        table = WeightTable.random(cfg.patch_size, cfg.embed_dim, seed=2)
        samples = [
            build_patches(voxelize(random_cloud(400, 20 + i), cfg), cfg.patch_size)
            for i in range(4)
        ]
        batched = embed_tokens_batch(samples, table)
        for patches, tokens in zip(samples, batched):
            single = embed_tokens(patches, table)
            np.testing.assert_allclose(single.tokens, tokens, atol=1e-9)

    def test_valid_mask_all_true(self, rng):
        cfg = TokenizerConfig.desk()
        table = WeightTable.random(cfg.patch_size, cfg.embed_dim, seed=3)
        ts = tokenize(random_cloud(100, 30), cfg, table)
        assert ts.valid_mask.all()
        assert np.isfinite(ts.tokens).all()


class TestDenseReferenceEmbed:
    def test_matches_sparse_embedding_on_full_patch(self, rng):
        for a in (2, 4):
            table = WeightTable.random(a, 6, seed=a)
            feats = rng.uniform(size=(a**3, 12))
            occupied = np.ones(a**3, dtype=bool)
            dense = dense_reference_embed(feats, occupied, table)
            sparse = embed_tokens([patch_of(feats, np.arange(a**3))], table)
            np.testing.assert_allclose(dense, sparse.tokens[0], atol=1e-6)

    def test_zero_features_zero_token(self):
        table = WeightTable.random(2, 3, seed=1)
        out = dense_reference_embed(np.zeros((8, 12)), np.ones(8, dtype=bool), table)
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_single_cell_patch(self, rng):
        table = WeightTable.random(1, 4, seed=5)
        feats = rng.uniform(size=(1, 12))
        out = dense_reference_embed(feats, np.ones(1, dtype=bool), table)
        np.testing.assert_allclose(out, feats[0] @ table.weights[0])

    def test_rejects_unoccupied_cell(self, rng):
        table = WeightTable.random(2, 3, seed=1)
        occ = np.ones(8, dtype=bool)
        occ[5] = False
        with pytest.raises(ValueError, match="occupied"):
            dense_reference_embed(rng.uniform(size=(8, 12)), occ, table)


class TestPositionalEmbed:
    def test_zero_params_zero_vector(self):
        cfg = TokenizerConfig.desk()
        params = PosEmbedParams.zeros(cfg)
        out = positional_embed(np.array([4, 8, 12]), params)
        np.testing.assert_array_equal(out, np.zeros(cfg.embed_dim))

    def test_deterministic(self):
        cfg = TokenizerConfig.desk()
        params = PosEmbedParams.random(cfg, seed=4)
        a = positional_embed(np.array([4, 0, 28]), params)
        b = positional_embed(np.array([4, 0, 28]), params)
        np.testing.assert_array_equal(a, b)

    def test_hand_wired_network(self):
        # h=1, C=1, first affine sums coordinates, second is the identity:
        # position (0,0,0) -> input 0 -> GELU(0)=0 -> output 0.
        params = PosEmbedParams(
            w1=np.ones((3, 1)),
            b1=np.zeros(1),
            w2=np.ones((1, 1)),
            b2=np.zeros(1),
            space_size=32,
        )
        out = positional_embed(np.array([0, 0, 0]), params)
        np.testing.assert_array_equal(out, np.zeros(1))

    def test_input_scaled_by_space_size(self):
        params = PosEmbedParams(
            w1=np.eye(3, 1),
            b1=np.zeros(1),
            w2=np.full((1, 1), 2.0),
            b2=np.zeros(1),
            space_size=32,
        )
        # x = 16/32 = 0.5 -> gelu(0.5) -> 2*gelu(0.5)
        from voxmae.tokenizer import gelu

        out = positional_embed(np.array([16, 0, 0]), params)
        np.testing.assert_allclose(out, [2.0 * gelu(np.array(0.5))])


class TestPermutationInvariance:
    def test_tokensets_match_under_permutation(self):
        cfg = TokenizerConfig.desk()
        table = WeightTable.random(cfg.patch_size, cfg.embed_dim, seed=9)
        pos_params = PosEmbedParams.random(cfg, seed=10)
        rng = np.random.default_rng(99)
        pc = random_cloud(1500, 42)
        base = tokenize(pc, cfg, table, pos_params)
        for _ in range(3):
            perm = rng.permutation(pc.count)
            shuffled = PointCloud(points=pc.points[perm])
            ts = tokenize(shuffled, cfg, table, pos_params)
            np.testing.assert_array_equal(ts.positions, base.positions)
            np.testing.assert_allclose(ts.tokens, base.tokens, atol=1e-6)
            np.testing.assert_allclose(ts.pos_embeddings, base.pos_embeddings, atol=1e-6)


class TestTokenizerConfig:
    def test_rejects_indivisible_space(self):
        with pytest.raises(ValueError, match="divisible"):
            TokenizerConfig(voxel_size=1.0 / 30.0, space_size=30, patch_size=16)

    def test_rejects_inconsistent_voxel_size(self):
        with pytest.raises(ValueError, match="voxel_size"):
            TokenizerConfig(voxel_size=1.0 / 100.0, space_size=224)

    def test_paper_scale_weight_count(self):
        assert PAPER_CFG.cells_per_patch == 4096
