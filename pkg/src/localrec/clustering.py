"""Density-gated spectral clustering with automatic cluster-count detection.

Pipeline over a set of points (node embeddings):

1. Local density rho_i = size of the neighborhood within the p-th smallest
   distance from i (ties at the boundary included).
2. A gated Gaussian similarity: each node i trusts only neighbors closer
   than its nearest density-contrasting neighbor, with per-node bandwidth
   sigma_i set to the mean distance of the trusted set.
3. Cluster centers = points whose gamma = rho * delta is an extreme outlier
   (gamma > mean + 5 * std), where delta is the distance to the nearest
   higher-density point.
4. Normalized spectral embedding of the similarity graph per connected
   component, k-means seeded at the detected centers.

Zero-similarity (cold) nodes bypass the spectral step into a reserved
trailing cluster.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import eigsh
from scipy.spatial.distance import cdist

from .errors import DegenerateDataset, InvalidK

DENSE_EIG_LIMIT = 2000


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a 2-d array")
    return cdist(points, points)


def default_neighborhood_size(n: int) -> int:
    """p used for the density estimate: 2% of the dataset, at least 1."""
    return max(1, int(np.ceil(0.02 * n)))


@dataclass
class DensityProfile:
    rho: np.ndarray
    tau: np.ndarray  # per-node boundary distance (p-th smallest)
    p: int

    @property
    def n(self) -> int:
        return len(self.rho)


def compute_density(points: np.ndarray, p: int | None = None,
                    dist: np.ndarray | None = None) -> DensityProfile:
    """Count neighbors within each node's p-th-smallest distance.

    Boundary ties are included, so rho_i >= p and rho varies only where
    distances tie.
    """
    if dist is None:
        dist = pairwise_distances(points)
    n = dist.shape[0]
    if n < 2:
        raise DegenerateDataset("density needs at least 2 points")
    if p is None:
        p = default_neighborhood_size(n)
    if p < 1:
        raise ValueError("p must be >= 1")
    d = dist.copy()
    np.fill_diagonal(d, np.inf)
    kth = min(p, n - 1) - 1
    tau = np.partition(d, kth, axis=1)[:, kth]
    rho = (d <= tau[:, None]).sum(axis=1).astype(np.int64)
    return DensityProfile(rho=rho, tau=tau, p=p)


@dataclass
class DnnSimilarity:
    matrix: sp.csr_matrix
    sigma: np.ndarray
    theta: float
    k_neighbors: int


def _neighbor_order(dist: np.ndarray) -> np.ndarray:
    """Rows of neighbor indices sorted by (distance, index), self excluded."""
    n = dist.shape[0]
    d = dist.copy()
    np.fill_diagonal(d, np.inf)
    # stable sort keeps ascending index order among tied distances
    return np.argsort(d, axis=1, kind="stable")[:, :n - 1]


def dnn_similarity(profile: DensityProfile, dist: np.ndarray,
                   theta: float | None = None,
                   k_neighbors: int | None = None) -> DnnSimilarity:
    """Gated Gaussian similarity with density-contrast neighbor screening.

    For node i with K nearest neighbors N_i: J_i = {j in N_i with
    |rho_i - rho_j| > theta} and the trusted set T_i keeps the members of
    N_i strictly closer than the nearest member of J_i (all of N_i when J_i
    is empty).  sigma_i is the mean distance to T_i; zero sigmas are lifted
    to the smallest positive one.  S_ij = exp(-d_ij^2 / (2 max(sigma_i,
    sigma_j)^2)) for j in T_i, then symmetrized by elementwise max with unit
    diagonal.
    """
    rho = profile.rho.astype(np.float64)
    n = profile.n
    if theta is None:
        theta = 0.5 * float(np.std(rho))
    if k_neighbors is None:
        k_neighbors = max(profile.p, 7)
    k_neighbors = min(k_neighbors, n - 1)
    if k_neighbors < 1:
        raise DegenerateDataset("similarity needs at least one neighbor")

    order = _neighbor_order(dist)[:, :k_neighbors]
    sigma = np.zeros(n, np.float64)
    trusted: list[np.ndarray] = []
    for i in range(n):
        nbrs = order[i]
        d_i = dist[i, nbrs]
        contrast = np.abs(rho[i] - rho[nbrs]) > theta
        cut = d_i[contrast].min() if contrast.any() else np.inf
        t_mask = d_i < cut
        t = nbrs[t_mask]
        trusted.append(t)
        if len(t):
            sigma[i] = dist[i, t].mean()

    pos = sigma[sigma > 0]
    if len(pos) == 0:
        raise DegenerateDataset("all similarity bandwidths are zero")
    sigma = np.where(sigma > 0, sigma, pos.min())

    rows, cols, vals = [], [], []
    for i in range(n):
        t = trusted[i]
        if len(t) == 0:
            continue
        band = np.maximum(sigma[i], sigma[t])
        s = np.exp(-dist[i, t] ** 2 / (2.0 * band ** 2))
        rows.append(np.full(len(t), i, np.int64))
        cols.append(t.astype(np.int64))
        vals.append(s)
    if rows:
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n)).tocsr()
    else:
        mat = sp.csr_matrix((n, n))
    mat = mat.maximum(mat.T)
    mat = mat.tolil()
    mat.setdiag(1.0)
    mat = mat.tocsr()
    mat.sort_indices()
    return DnnSimilarity(matrix=mat, sigma=sigma, theta=float(theta),
                         k_neighbors=int(k_neighbors))


@dataclass
class CenterDetection:
    centers: np.ndarray
    rho: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    threshold: float
    fallback: bool = False


def detect_centers(profile: DensityProfile, dist: np.ndarray) -> CenterDetection:
    """Pick cluster centers as extreme outliers of gamma = rho * delta.

    delta_i is the distance to the nearest strictly-denser point.  Within
    the maximum-density tie group, members take the distance to the nearest
    earlier-indexed member, except the first, which takes the largest delta
    seen elsewhere.  Centers satisfy gamma > mean + 5 * std; if none do, the
    single argmax-gamma point is used.
    """
    rho = profile.rho
    n = profile.n
    d = dist.copy()
    np.fill_diagonal(d, np.inf)
    delta = np.zeros(n, np.float64)
    max_rho = rho.max()
    top = np.flatnonzero(rho == max_rho)
    rest = np.flatnonzero(rho != max_rho)
    for i in rest:
        higher = rho > rho[i]
        delta[i] = d[i, higher].min()
    for pos in range(1, len(top)):
        i = top[pos]
        delta[i] = d[i, top[:pos]].min()
    first = top[0]
    others = np.concatenate([rest, top[1:]])
    delta[first] = delta[others].max() if len(others) else 1.0
    gamma = rho.astype(np.float64) * delta
    threshold = float(gamma.mean() + 5.0 * gamma.std())
    centers = np.flatnonzero(gamma > threshold)
    fallback = False
    if len(centers) == 0:
        centers = np.array([int(np.argmax(gamma))], np.int64)
        fallback = True
    return CenterDetection(centers=centers.astype(np.int64), rho=rho,
                           delta=delta, gamma=gamma, threshold=threshold,
                           fallback=fallback)


def save_center_diagnostics(path, detection: CenterDetection) -> None:
    is_center = np.zeros(len(detection.rho), bool)
    is_center[detection.centers] = True
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("node,rho,delta,gamma,is_center\n")
        for i in range(len(detection.rho)):
            fh.write("%d,%d,%.17g,%.17g,%d\n" % (
                i, detection.rho[i], detection.delta[i], detection.gamma[i],
                int(is_center[i])))


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_history: list = field(default_factory=list)
    n_iter: int = 0


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = (np.sum(points ** 2, axis=1)[:, None]
          + np.sum(centroids ** 2, axis=1)[None, :]
          - 2.0 * points @ centroids.T)
    return np.maximum(d2, 0.0)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = np.empty((k, points.shape[1]), np.float64)
    centroids[0] = points[rng.integers(n)]
    d2 = _sq_dists(points, centroids[:1]).ravel()
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[c] = points[rng.integers(n)]
        else:
            centroids[c] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, _sq_dists(points, centroids[c:c + 1]).ravel())
    return centroids


def kmeans(points: np.ndarray, k: int, init_centroids: np.ndarray | None = None,
           seed: int = 0, max_iter: int = 300, tol: float = 1e-8) -> KMeansResult:
    """Lloyd iterations; empty clusters are reseeded with the farthest point."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if k < 1 or k > n:
        raise InvalidK("k=%d not in [1, %d]" % (k, n))
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, 37]))
    if init_centroids is None:
        centroids = _kmeanspp_init(points, k, rng)
    else:
        centroids = np.array(init_centroids, dtype=np.float64, copy=True)
        if centroids.shape != (k, points.shape[1]):
            raise InvalidK("init_centroids shape mismatch")

    history = []
    assignments = np.zeros(n, np.int64)
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dists(points, centroids)
        assignments = np.argmin(d2, axis=1)
        nearest = d2[np.arange(n), assignments]
        for c in range(k):
            if not np.any(assignments == c):
                far = int(np.argmax(nearest))
                assignments[far] = c
                nearest[far] = 0.0
        history.append(float(d2[np.arange(n), assignments].sum()))
        new_centroids = centroids.copy()
        for c in range(k):
            members = assignments == c
            new_centroids[c] = points[members].mean(axis=0)
        shift = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if shift < tol:
            break
    d2 = _sq_dists(points, centroids)
    assignments = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), assignments].sum())
    return KMeansResult(assignments=assignments, centroids=centroids,
                        inertia=inertia, inertia_history=history, n_iter=it)


@dataclass
class ClusterModel:
    assignments: np.ndarray
    k: int
    cold_cluster: int | None = None
    centers: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    spectral_dim: int = 0

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == cluster)

    def save(self, path) -> None:
        cold = "none" if self.cold_cluster is None else str(self.cold_cluster)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# k %d cold %s centers %s\n" % (
                self.k, cold, ",".join(str(int(c)) for c in self.centers) or "-"))
            for node, cl in enumerate(self.assignments):
                fh.write("%d\t%d\n" % (node, cl))

    @classmethod
    def load(cls, path) -> "ClusterModel":
        k, cold, centers = 1, None, np.empty(0, np.int64)
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("#"):
                    parts = line[1:].split()
                    k = int(parts[parts.index("k") + 1])
                    c = parts[parts.index("cold") + 1]
                    cold = None if c == "none" else int(c)
                    cs = parts[parts.index("centers") + 1]
                    if cs != "-":
                        centers = np.array([int(x) for x in cs.split(",")], np.int64)
                    continue
                a, b = line.split()
                pairs.append((int(a), int(b)))
        assignments = np.zeros(len(pairs), np.int64)
        for node, cl in pairs:
            assignments[node] = cl
        return cls(assignments=assignments, k=k, cold_cluster=cold, centers=centers)


def _spectral_embed(s_sub: sp.csr_matrix, k: int, seed: int) -> np.ndarray:
    """Rows of the k smallest eigenvectors of the normalized Laplacian."""
    n = s_sub.shape[0]
    deg = np.asarray(s_sub.sum(axis=1)).ravel()
    dinv = 1.0 / np.sqrt(deg)
    if n <= DENSE_EIG_LIMIT:
        s_dense = s_sub.toarray()
        lap = -s_dense * dinv[:, None] * dinv[None, :]
        np.fill_diagonal(lap, lap.diagonal() + 1.0)
        _, vecs = eigh(lap, subset_by_index=[0, k - 1])
    else:
        norm = s_sub.multiply(dinv[:, None]).multiply(dinv[None, :]).tocsr()
        lap = sp.identity(n, format="csr") - norm
        v0 = np.full(n, 1.0 / np.sqrt(n))
        _, vecs = eigsh(lap, k=k, sigma=-1e-3, which="LM", v0=v0, tol=1e-10)
    norms = np.sqrt((vecs ** 2).sum(axis=1))
    safe = np.where(norms > 0, norms, 1.0)
    return vecs / safe[:, None]


def spectral_cluster(similarity: DnnSimilarity, detection: CenterDetection,
                     seed: int = 0) -> ClusterModel:
    """Cluster each connected component with as many groups as it has centers.

    Nodes with no off-diagonal similarity are collected into a reserved
    trailing cluster instead of entering the spectral step.
    """
    s = similarity.matrix
    n = s.shape[0]
    off = s.copy().tolil()
    off.setdiag(0.0)
    off = off.tocsr()
    off.eliminate_zeros()
    live = np.flatnonzero(np.diff(off.indptr) > 0)
    cold = np.setdiff1d(np.arange(n), live)

    assignments = np.full(n, -1, np.int64)
    next_id = 0
    spectral_dim = 0
    if len(live):
        s_live = s[np.ix_(live, live)].tocsr()
        n_comp, labels = connected_components(s_live, directed=False)
        center_set = set(detection.centers.tolist())
        comp_order = []
        for c in range(n_comp):
            members_local = np.flatnonzero(labels == c)
            comp_order.append((int(live[members_local[0]]), members_local))
        comp_order.sort()
        for _, members_local in comp_order:
            members = live[members_local]
            local_centers = [i for i, g in enumerate(members) if int(g) in center_set]
            k_c = max(1, len(local_centers))
            if k_c == 1 or len(members) == 1:
                assignments[members] = next_id
                next_id += 1
                continue
            s_sub = s_live[np.ix_(members_local, members_local)].tocsr()
            emb = _spectral_embed(s_sub, k_c, seed)
            spectral_dim += k_c
            init = emb[local_centers]
            km = kmeans(emb, k_c, init_centroids=init, seed=seed)
            assignments[members] = next_id + km.assignments
            next_id += k_c

    cold_cluster = None
    if len(cold):
        cold_cluster = next_id
        assignments[cold] = cold_cluster
        next_id += 1
    return ClusterModel(assignments=assignments, k=next_id,
                        cold_cluster=cold_cluster,
                        centers=detection.centers.copy(),
                        spectral_dim=spectral_dim)


def cluster_vectors(vectors: np.ndarray, p: int | None = None,
                    theta: float | None = None, k_neighbors: int | None = None,
                    seed: int = 0):
    """Full clustering chain over embedding vectors.

    All-zero vectors (nodes that never entered a walk) skip straight to the
    cold cluster, which is shared with any zero-similarity nodes found
    later.  Returns (ClusterModel, CenterDetection or None).
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    n = len(vectors)
    zero = np.flatnonzero((vectors == 0).all(axis=1))
    live = np.setdiff1d(np.arange(n), zero)

    if len(live) < 2:
        # too few embeddable nodes to cluster: one live cluster, one cold
        assignments = np.zeros(n, np.int64)
        k = 1
        cold_cluster = None
        if len(zero) and len(live):
            assignments[zero] = 1
            k = 2
            cold_cluster = 1
        elif len(zero):
            cold_cluster = 0
        return (ClusterModel(assignments=assignments, k=k,
                             cold_cluster=cold_cluster), None)

    dist = pairwise_distances(vectors[live])
    profile = compute_density(vectors[live], p=p, dist=dist)
    sim = dnn_similarity(profile, dist, theta=theta, k_neighbors=k_neighbors)
    detection = detect_centers(profile, dist)
    local = spectral_cluster(sim, detection, seed=seed)

    if local.cold_cluster is None:
        k_real = local.k
        local_cold = -1
    else:
        k_real = local.k - 1
        local_cold = local.cold_cluster

    assignments = np.full(n, -1, np.int64)
    has_cold = len(zero) > 0 or local_cold >= 0
    for pos, node in enumerate(live):
        a = local.assignments[pos]
        assignments[node] = k_real if a == local_cold else a
    if len(zero):
        assignments[zero] = k_real
    k = k_real + (1 if has_cold else 0)
    if k == 0:
        k = 1
        assignments[:] = 0
    model = ClusterModel(assignments=assignments, k=k,
                         cold_cluster=k_real if has_cold else None,
                         centers=live[local.centers.astype(np.int64)]
                         if len(local.centers) else np.empty(0, np.int64),
                         spectral_dim=local.spectral_dim)
    return model, detection
