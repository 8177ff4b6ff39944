import numpy as np
import pytest

from drivestress.clustering import (
    ProfileVector,
    TaskAssignment,
    assign_tasks,
    build_profiles,
    kmeans,
    load_assignment,
    profile_vector,
    save_profiles_csv,
    similarity_matrix,
    spectral_cluster,
)
from drivestress.errors import (
    ClusteringFailureError,
    DegenerateGraphError,
    InvalidParameterError,
    MissingProfileError,
    SchemaError,
)
from drivestress.features import WindowInstance
from oracles import (
    block_matrix,
    labels_to_partition,
    min_ncut_partition,
    partitions_into,
)


def instance(drive, label, feat):
    feat = np.asarray(feat, dtype=float)
    if feat.size == 1:
        feat = np.full(14, float(feat))
    return WindowInstance(
        drive_id=drive,
        start=0.0,
        duration=30.0,
        eda_features=feat[:9],
        hr_features=feat[9:],
        label=label,
    )


class TestProfileVector:
    def test_single_instance(self):
        inst = instance("a", "H", 0.4)
        pv = profile_vector([inst], "a")
        np.testing.assert_allclose(pv.p, inst.features)

    def test_mean_of_two(self):
        v = np.linspace(0.0, 1.0, 14)
        w = np.linspace(1.0, 0.0, 14)
        pv = profile_vector([instance("a", "H", v), instance("a", "H", w)], "a")
        np.testing.assert_allclose(pv.p, (v + w) / 2)

    def test_three_binary_instances(self):
        rows = [np.zeros(14), np.zeros(14), np.zeros(14)]
        rows[0][:2] = [1.0, 0.0]
        rows[1][:2] = [0.0, 1.0]
        rows[2][:2] = [1.0, 1.0]
        pv = profile_vector([instance("a", "H", r) for r in rows], "a")
        np.testing.assert_allclose(pv.p[:2], [2.0 / 3.0, 2.0 / 3.0])

    def test_only_h_instances_count(self):
        insts = [instance("a", "H", 0.2), instance("a", "L", 0.9)]
        pv = profile_vector(insts, "a")
        np.testing.assert_allclose(pv.p, np.full(14, 0.2))

    def test_missing_h_instances(self):
        with pytest.raises(MissingProfileError):
            profile_vector([instance("a", "L", 0.2)], "a")

    def test_build_profiles_fallback(self):
        insts = [
            instance("a", "H", 0.2),
            instance("a", "L", 0.1),
            instance("b", "L", 0.9),
        ]
        profiles, fallbacks = build_profiles(insts)
        assert [pv.drive_id for pv in profiles] == ["a"]
        assert set(fallbacks) == {"b"}
        np.testing.assert_allclose(fallbacks["b"], np.full(14, 0.9))


class TestSimilarityMatrix:
    def test_identical_profiles_all_ones(self):
        profiles = [ProfileVector(d, np.full(14, 0.5)) for d in "abc"]
        W = similarity_matrix(profiles)
        np.testing.assert_allclose(W, 1.0)

    def test_rbf_value(self):
        p = np.zeros(14)
        q = np.zeros(14)
        q[0] = np.sqrt(10.0)
        W = similarity_matrix([ProfileVector("a", p), ProfileVector("b", q)], gamma=0.1)
        assert W[0, 1] == pytest.approx(np.exp(-1.0), abs=1e-12)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        profiles = [ProfileVector(f"d{i}", rng.uniform(0, 1, 14)) for i in range(6)]
        W = similarity_matrix(profiles)
        np.testing.assert_allclose(W, W.T, atol=1e-12)
        np.testing.assert_array_equal(np.diag(W), np.ones(6))


class TestKmeans:
    def test_k_equals_n_gives_singletons(self):
        rng = np.random.default_rng(1)
        points = rng.standard_normal((5, 2))
        labels = kmeans(points, 5, seed=0)
        assert len(set(labels.tolist())) == 5

    def test_two_separated_groups_match_enumeration(self):
        points = np.array([[0.0], [0.1], [10.0], [10.1]])
        labels = kmeans(points, 2, seed=0)

        def wcss(blocks):
            return sum(
                float(np.sum((points[list(b)] - points[list(b)].mean(axis=0)) ** 2))
                for b in blocks
            )

        best = min(partitions_into(4, 2), key=wcss)
        assert labels_to_partition(labels) == set(best)

    def test_identical_points_fail(self):
        with pytest.raises(ClusteringFailureError):
            kmeans(np.ones((4, 2)), 2, seed=0)

    def test_k_above_n(self):
        with pytest.raises(InvalidParameterError):
            kmeans(np.ones((2, 2)), 3, seed=0)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        points = rng.standard_normal((30, 3))
        a = kmeans(points, 4, seed=7)
        b = kmeans(points, 4, seed=7)
        np.testing.assert_array_equal(a, b)


class TestSpectralCluster:
    def test_single_task(self):
        W = np.ones((5, 5))
        labels = spectral_cluster(W, 1, seed=0)
        np.testing.assert_array_equal(labels, np.zeros(5, dtype=int))

    def test_two_blocks_recovered_for_any_seed(self):
        rng = np.random.default_rng(3)
        W = block_matrix([3, 4], rng, intra=(1.0, 1.0), inter=1e-6)
        expected = {frozenset(range(3)), frozenset(range(3, 7))}
        for seed in range(5):
            labels = spectral_cluster(W, 2, seed=seed)
            assert labels_to_partition(labels) == expected

    def test_outlier_forms_singleton(self):
        profiles = [
            ProfileVector("a", np.full(14, 0.10)),
            ProfileVector("b", np.full(14, 0.12)),
            ProfileVector("c", np.full(14, 0.95)),
        ]
        W = similarity_matrix(profiles, gamma=0.5)
        labels = spectral_cluster(W, 2, seed=0)
        assert labels_to_partition(labels) == min_ncut_partition(W, 2)
        assert labels_to_partition(labels) == {frozenset({0, 1}), frozenset({2})}

    def test_matches_bruteforce_ncut_on_random_blocks(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            k = int(rng.integers(2, 4))
            sizes = [int(s) for s in rng.integers(1, 4, size=k)]
            if sum(sizes) < k + 1:
                sizes[0] += 2
            W = block_matrix(sizes, rng, inter=1e-4)
            labels = spectral_cluster(W, k, seed=0)
            assert labels_to_partition(labels) == min_ncut_partition(W, k)

    def test_permutation_invariance_as_partition(self):
        rng = np.random.default_rng(5)
        W = block_matrix([3, 3, 2], rng, inter=1e-5)
        labels = spectral_cluster(W, 3, seed=1)
        perm = rng.permutation(len(W))
        W_perm = W[np.ix_(perm, perm)]
        labels_perm = spectral_cluster(W_perm, 3, seed=1)
        mapped = {
            frozenset(perm[sorted(block)].tolist())
            for block in labels_to_partition(labels_perm)
        }
        assert mapped == labels_to_partition(labels)

    def test_laplacian_properties(self):
        rng = np.random.default_rng(6)
        W = block_matrix([4, 3], rng, inter=1e-3)
        degrees = W.sum(axis=1)
        L = np.diag(degrees) - W
        np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-10)
        # generalized eigenproblem L u = lambda G u has eigenvalue 0 with constant u
        const = np.ones(len(W))
        np.testing.assert_allclose(L @ const, 0.0 * degrees * const, atol=1e-10)

    def test_isolated_vertex_rejected(self):
        W = np.ones((4, 4))
        W[3, :] = 0.0
        W[:, 3] = 0.0
        with pytest.raises(DegenerateGraphError):
            spectral_cluster(W, 2, seed=0)

    def test_asymmetric_rejected(self):
        W = np.ones((3, 3))
        W[0, 1] = 0.5
        with pytest.raises(InvalidParameterError):
            spectral_cluster(W, 2, seed=0)

    def test_bad_t(self):
        with pytest.raises(InvalidParameterError):
            spectral_cluster(np.ones((3, 3)), 4, seed=0)


class TestAssignTasks:
    def make_two_group_instances(self):
        insts = []
        for d in ("a", "b"):
            insts.append(instance(d, "H", 0.2))
            insts.append(instance(d, "L", 0.1))
        for d in ("c", "d"):
            insts.append(instance(d, "H", 0.9))
            insts.append(instance(d, "L", 0.1))
        return insts

    def test_two_groups_recovered(self):
        assignment, profiles, W = assign_tasks(self.make_two_group_instances(), 2, seed=0)
        assert assignment.n_tasks == 2
        assert assignment.task_of("a") == assignment.task_of("b")
        assert assignment.task_of("c") == assignment.task_of("d")
        assert assignment.task_of("a") != assignment.task_of("c")
        assert W.shape == (4, 4)

    def test_fallback_drive_joins_nearest_cluster(self):
        insts = self.make_two_group_instances()
        insts.append(instance("e", "L", 0.88))  # no H windows, L-mean near c/d group
        assignment, _, _ = assign_tasks(insts, 2, seed=0)
        assert assignment.task_of("e") == assignment.task_of("c")

    def test_single_drive_single_task(self):
        insts = [instance("a", "H", 0.5), instance("a", "L", 0.2)]
        assignment, _, _ = assign_tasks(insts, 1, seed=0)
        assert assignment.tasks == {"a": 1}

    def test_t_above_drives(self):
        insts = [instance("a", "H", 0.5), instance("b", "H", 0.2)]
        with pytest.raises(InvalidParameterError):
            assign_tasks(insts, 3, seed=0)

    def test_deterministic(self):
        insts = self.make_two_group_instances()
        a1, _, _ = assign_tasks(insts, 2, seed=5)
        a2, _, _ = assign_tasks(insts, 2, seed=5)
        assert a1.tasks == a2.tasks


class TestTaskAssignmentType:
    def test_json_roundtrip(self):
        assignment = TaskAssignment(tasks={"a": 1, "b": 2, "c": 1}, n_tasks=2)
        again = TaskAssignment.from_json(assignment.to_json())
        assert again == assignment

    def test_empty_task_rejected(self):
        with pytest.raises(InvalidParameterError):
            TaskAssignment(tasks={"a": 1, "b": 1}, n_tasks=2)

    def test_malformed_json(self):
        with pytest.raises(SchemaError):
            TaskAssignment.from_json("{}")

    def test_load_assignment(self, tmp_path):
        assignment = TaskAssignment(tasks={"a": 1, "b": 2}, n_tasks=2)
        path = tmp_path / "assignment.json"
        path.write_text(assignment.to_json(), encoding="utf-8")
        assert load_assignment(path) == assignment


def test_save_profiles_csv(tmp_path):
    profiles = [ProfileVector("a", np.linspace(0, 1, 14))]
    path = tmp_path / "profiles.csv"
    save_profiles_csv(profiles, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("drive_id,p1,")
    assert lines[1].startswith("a,")
