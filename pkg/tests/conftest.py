import numpy as np
import pytest

from localrec.datasets import generate_synthetic_movielens


@pytest.fixture(scope="session")
def small_dataset_dir(tmp_path_factory):
    """A small rating dataset tree shared across tests."""
    d = tmp_path_factory.mktemp("data") / "small"
    generate_synthetic_movielens(d, n_users=60, n_items=120,
                                 n_interactions=2000, n_groups=3, seed=3)
    return d


def random_bipartite(rng, n_users, n_items, n_categories, density=0.12):
    """Random interactions plus random item categories, external string ids."""
    interactions = []
    for u in range(n_users):
        deg = 1 + int(rng.integers(0, max(2, int(density * n_items))))
        items = rng.choice(n_items, size=min(deg, n_items), replace=False)
        for i in items:
            interactions.append(("u%d" % u, "i%d" % i))
    cats = {}
    for i in range(n_items):
        k = int(rng.integers(0, min(4, n_categories + 1)))
        cats["i%d" % i] = ["c%d" % c for c in rng.choice(n_categories, size=k,
                                                         replace=False)]
    return interactions, cats


def multiscale_points():
    """Dense ring plus a sparse line, the two-scale similarity fixture.

    Returns (points, index map) where the map names the four probe points:
    d = ring point nearest the line, b = its antipode, a and c = the two
    nearest line points.  Each ring location is sampled twice at identical
    coordinates, so the distance ties that inflate ring density under the
    tie-inclusive count are exact in floating point (mirror-image chords
    computed from cos/sin would differ in the last ulp).  With p=4 the ring
    density is 5 everywhere and the line density is 4.
    """
    pts = []
    for k in range(12):
        ang = 2.0 * np.pi * k / 12.0
        loc = (0.4 * np.cos(ang), 0.4 * np.sin(ang))
        pts.append(loc)
        pts.append(loc)
    probe = {"d": 0, "b": 12}
    line = [(1.2, 0.01), (1.65, 0.02), (2.07, 0.03), (2.46, 0.04),
            (2.87, 0.05)]
    probe["a"] = len(pts)
    probe["c"] = len(pts) + 1
    pts.extend(line)
    return np.asarray(pts, np.float64), probe


def two_moons(dense_locations=30, sparse_points=20, seed=77):
    """Curved clusters at two sampling densities for p=4.

    A dense crescent (coincident twin samples, density 5 under the
    tie-inclusive count) hovers 0.4 above the top of a sparse unit dome
    (tie-free, density 4).  The sparse spacing (~0.16) keeps every dome
    point's four nearest inside the dome, yet the pinch gap sits within the
    dome's 7-NN radius, so an ungated K-NN similarity would bridge the
    clusters; the density gate severs the bridge.
    """
    w = np.linspace(-np.pi / 2, np.pi / 2, dense_locations)
    dense = np.column_stack([0.45 * np.sin(w), 1.85 - 0.45 * np.cos(w)])
    dense = np.repeat(dense, 2, axis=0)
    rng = np.random.default_rng(seed)
    t = (np.arange(sparse_points) + 0.5) * np.pi / sparse_points
    t = t + rng.uniform(-0.02, 0.02, size=sparse_points)
    sparse = np.column_stack([np.cos(t), np.sin(t)])
    labels = np.array([0] * len(dense) + [1] * len(sparse), np.int64)
    return np.vstack([dense, sparse]), labels


def gaussian_blobs(rng, n_blobs, points_per_blob=50, std=0.05, sep_scale=12.0):
    """Well-separated isotropic blobs in 2-d with labels."""
    centers = []
    while len(centers) < n_blobs:
        cand = rng.uniform(-10, 10, size=2)
        if all(np.linalg.norm(cand - c) >= sep_scale * std * 2 for c in centers):
            centers.append(cand)
    points = []
    labels = []
    for b, c in enumerate(centers):
        points.append(c + rng.normal(0, std, size=(points_per_blob, 2)))
        labels.extend([b] * points_per_blob)
    return np.vstack(points), np.asarray(labels, np.int64)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance test at the end of the run."""
    outcomes = {}
    for bucket, reports in terminalreporter.stats.items():
        for rep in reports:
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            if getattr(rep, "when", None) == "call" and rep.passed:
                outcomes.setdefault(nodeid, True)
            elif getattr(rep, "failed", False):
                outcomes[nodeid] = False
    if not outcomes:
        return
    terminalreporter.write_sep("-", "acceptance summary")
    for nodeid in sorted(outcomes):
        status = "PASS" if outcomes[nodeid] else "FAIL"
        terminalreporter.write_line("%s %s" % (status, nodeid.split("::")[-1]))
