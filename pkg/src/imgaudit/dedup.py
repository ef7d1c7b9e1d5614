"""Exact- and near-duplicate detection.

Exact duplicates hash decoded pixels (so re-encoded copies still match),
near duplicates combine a pinned 64-bit perceptual hash clustered by
single-linkage Hamming distance with an embedding-similarity route behind a
pluggable provider.
"""

from __future__ import annotations

import hashlib
import struct
import subprocess
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dctn

from . import imaging
from .errors import ProviderFailure

EXACT = "EXACT"
PIXEL_NEAR = "PIXEL_NEAR"
SEMANTIC_NEAR = "SEMANTIC_NEAR"
MERGED = "MERGED"

FIRST_BY_ID = "FIRST_BY_ID"
HIGHEST_MEAN_QUALITY = "HIGHEST_MEAN_QUALITY"

DEFAULT_HAMMING_CUTOFF = 10
DEFAULT_SIMILARITY_CUTOFF = 0.96

_DUPLICATE_KINDS = ("EXACT_DUPLICATE", "NEAR_DUPLICATE")


@dataclass(frozen=True)
class ContentDigest:
    image_id: str
    digest: str  # 128-bit value, hex encoded


@dataclass(frozen=True)
class PerceptualHash:
    image_id: str
    bits: int  # 64-bit value


@dataclass(frozen=True)
class Cluster:
    members: tuple
    provenance: str


@dataclass
class DuplicateClusterSet:
    """Disjoint groups of size >= 2; singletons stay implicit."""

    clusters: list = field(default_factory=list)
    failed_ids: tuple = ()

    def __post_init__(self):
        self.clusters = sorted(
            (Cluster(tuple(sorted(c.members)), c.provenance) for c in self.clusters),
            key=lambda c: c.members,
        )

    def member_ids(self) -> set:
        return {m for c in self.clusters for m in c.members}

    def as_sets(self) -> list:
        return [set(c.members) for c in self.clusters]


def content_digest(image: imaging.ImageRecord) -> ContentDigest:
    """MD5 over the canonical pixel serialization (dims, mode, raw samples)."""
    header = struct.pack("<II", image.width, image.height) + image.mode.encode()
    md5 = hashlib.md5(header + np.ascontiguousarray(image.pixels).tobytes())
    return ContentDigest(image_id=image.id, digest=md5.hexdigest())


def byte_digest(image_id: str, data: bytes) -> ContentDigest:
    """MD5 over raw file bytes, for byte-level audits."""
    return ContentDigest(image_id=image_id, digest=hashlib.md5(data).hexdigest())


def phash64(image: imaging.ImageRecord, formula: str = imaging.DEFAULT_LUMA) -> PerceptualHash:
    """Pinned 64-bit perceptual hash.

    Luma plane -> bilinear resize to 32x32 -> 2-D DCT-II -> keep the 8x8
    lowest-frequency block -> threshold every coefficient against the median
    of the block excluding the DC term; bits packed row-major, MSB first.
    """
    luma = imaging.to_luma(image, formula)
    small = imaging.resample_plane(luma, 32, 32, imaging.BILINEAR)
    coeffs = dctn(small, type=2)[:8, :8].ravel()
    median = float(np.median(coeffs[1:]))
    bits = 0
    for value in coeffs:
        bits = (bits << 1) | int(value > median)
    return PerceptualHash(image_id=image.id, bits=bits)


def hamming(a, b) -> int:
    """Popcount of the XOR of two 64-bit perceptual hashes."""
    av = a.bits if isinstance(a, PerceptualHash) else int(a)
    bv = b.bits if isinstance(b, PerceptualHash) else int(b)
    return (av ^ bv).bit_count()


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def _pairwise_hamming(bits: np.ndarray) -> np.ndarray:
    return np.bitwise_count(bits[:, None] ^ bits[None, :]).astype(np.int64)


def cluster_exact(digests) -> DuplicateClusterSet:
    """Group images sharing one content digest; pairs and larger only."""
    groups = {}
    for d in digests:
        groups.setdefault(d.digest, []).append(d.image_id)
    clusters = [
        Cluster(tuple(sorted(ids)), EXACT) for ids in groups.values() if len(ids) >= 2
    ]
    return DuplicateClusterSet(clusters=clusters)


def cluster_single_linkage(hashes, cutoff: int = DEFAULT_HAMMING_CUTOFF,
                           digests=None) -> DuplicateClusterSet:
    """Single-linkage clustering of perceptual hashes cut at a Hamming radius.

    Equivalent to the connected components of the graph whose edges join
    hashes at distance <= cutoff. Components where every pairwise distance is
    zero and (when `digests` maps ids to content digests) all digests agree
    are labeled EXACT; the rest are PIXEL_NEAR.
    """
    if not 0 <= cutoff <= 64:
        raise ValueError("cutoff must lie in [0, 64]")
    hashes = list(hashes)
    if not hashes:
        return DuplicateClusterSet(clusters=[])
    bits = np.array([h.bits for h in hashes], dtype=np.uint64)
    dist = _pairwise_hamming(bits)
    uf = _UnionFind(len(hashes))
    for i, j in zip(*np.nonzero(np.triu(dist <= cutoff, k=1))):
        uf.union(int(i), int(j))
    groups = {}
    for idx in range(len(hashes)):
        groups.setdefault(uf.find(idx), []).append(idx)
    clusters = []
    for members in groups.values():
        if len(members) < 2:
            continue
        ids = tuple(sorted(hashes[m].image_id for m in members))
        sub = dist[np.ix_(members, members)]
        provenance = PIXEL_NEAR
        if sub.max() == 0 and digests is not None:
            member_digests = {digests.get(i) for i in ids}
            if len(member_digests) == 1 and None not in member_digests:
                provenance = EXACT
        clusters.append(Cluster(ids, provenance))
    return DuplicateClusterSet(clusters=clusters)


@dataclass
class EmbeddingProvider:
    """Pluggable embedding seam; `embed` maps an ImageRecord to a vector."""

    name: str
    dimension: int
    embed: object

    def __call__(self, image: imaging.ImageRecord) -> np.ndarray:
        return self.embed(image)


def default_provider(formula: str = imaging.DEFAULT_LUMA) -> EmbeddingProvider:
    """8x8 bilinear luma thumbnail, mean-subtracted and unit-normalized."""

    def embed(image: imaging.ImageRecord) -> np.ndarray:
        luma = imaging.to_luma(image, formula)
        small = imaging.resample_plane(luma, 8, 8, imaging.BILINEAR).ravel()
        small = small - small.mean()
        norm = np.linalg.norm(small)
        return small / norm if norm > 0 else small

    return EmbeddingProvider(name="luma8x8", dimension=64, embed=embed)


class ExternalProcessProvider:
    """Embeddings from a helper process speaking a line protocol.

    For each image the provider writes the source path to the child's stdin
    and reads one line of whitespace-separated numbers back. Lets a
    model-backed embedder plug in without linking any ML runtime here.
    """

    def __init__(self, command, dimension: int, name: str = "external"):
        self.name = name
        self.dimension = dimension
        self.command = command
        self._proc = None

    def _ensure(self):
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
            )
        return self._proc

    def embed(self, image: imaging.ImageRecord) -> np.ndarray:
        if not image.source_path:
            raise ProviderFailure(image.id, "record has no source path")
        try:
            proc = self._ensure()
            proc.stdin.write(image.source_path + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
        except (OSError, ValueError, BrokenPipeError) as exc:
            raise ProviderFailure(image.id, str(exc)) from exc
        if not line:
            raise ProviderFailure(image.id, "provider process closed the pipe")
        try:
            vector = np.array([float(tok) for tok in line.split()], dtype=np.float64)
        except ValueError as exc:
            raise ProviderFailure(image.id, f"bad vector line: {line!r}") from exc
        if vector.size != self.dimension:
            raise ProviderFailure(
                image.id, f"expected {self.dimension} values, got {vector.size}"
            )
        return vector

    def __call__(self, image: imaging.ImageRecord) -> np.ndarray:
        return self.embed(image)

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)
        self._proc = None


_PROVIDER_FACTORIES = {"luma8x8": default_provider}


def register_provider(name: str, factory):
    _PROVIDER_FACTORIES[name] = factory


def get_provider(name: str, **kwargs):
    if name not in _PROVIDER_FACTORIES:
        raise KeyError(f"unknown embedding provider {name!r}")
    return _PROVIDER_FACTORIES[name](**kwargs)


def provider_from_config(config):
    """Build the embedding provider an AuditConfig selects."""
    if config.provider == "external":
        if not config.provider_command:
            raise ValueError("external provider needs provider_command")
        return ExternalProcessProvider(
            config.provider_command, config.provider_dimension
        )
    return get_provider(config.provider, formula=config.luma_formula)


def cluster_semantic(images, provider=None,
                     similarity_cutoff: float = DEFAULT_SIMILARITY_CUTOFF) -> DuplicateClusterSet:
    """Connected components of the cosine-similarity > cutoff graph.

    Nearest-neighbor search is exact pairwise; images the provider fails on
    are skipped and reported in `failed_ids`.
    """
    if not 0.0 < similarity_cutoff <= 1.0:
        raise ValueError("similarity cutoff must lie in (0, 1]")
    provider = provider or default_provider()
    images = list(images)
    ids, vectors, failed = [], [], []
    for record in images:
        try:
            vec = np.asarray(provider.embed(record), dtype=np.float64)
        except ProviderFailure as exc:
            failed.append(exc.image_id)
            continue
        ids.append(record.id)
        vectors.append(vec)
    if not ids:
        return DuplicateClusterSet(clusters=[], failed_ids=tuple(failed))
    matrix = np.stack(vectors)
    norms = np.linalg.norm(matrix, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = matrix / safe[:, None]
    unit[norms == 0] = 0.0
    similarity = unit @ unit.T
    uf = _UnionFind(len(ids))
    for i, j in zip(*np.nonzero(np.triu(similarity > similarity_cutoff, k=1))):
        uf.union(int(i), int(j))
    groups = {}
    for idx in range(len(ids)):
        groups.setdefault(uf.find(idx), []).append(idx)
    clusters = [
        Cluster(tuple(sorted(ids[m] for m in members)), SEMANTIC_NEAR)
        for members in groups.values()
        if len(members) >= 2
    ]
    return DuplicateClusterSet(clusters=clusters, failed_ids=tuple(failed))


def merge_duplicates(pixel: DuplicateClusterSet,
                     semantic: DuplicateClusterSet) -> DuplicateClusterSet:
    """Union the two cluster sets' edges and recompute components.

    A component identical to a cluster present on one side (or identically on
    both) keeps that provenance; anything genuinely stitched together from
    both sources becomes MERGED.
    """
    all_ids = sorted(pixel.member_ids() | semantic.member_ids())
    index = {image_id: i for i, image_id in enumerate(all_ids)}
    uf = _UnionFind(len(all_ids))
    for cluster in list(pixel.clusters) + list(semantic.clusters):
        first = index[cluster.members[0]]
        for member in cluster.members[1:]:
            uf.union(first, index[member])
    groups = {}
    for image_id, i in index.items():
        groups.setdefault(uf.find(i), []).append(image_id)

    by_members_pixel = {c.members: c.provenance for c in pixel.clusters}
    by_members_semantic = {c.members: c.provenance for c in semantic.clusters}
    clusters = []
    for members in groups.values():
        members = tuple(sorted(members))
        if len(members) < 2:
            continue
        in_pixel = by_members_pixel.get(members)
        in_semantic = by_members_semantic.get(members)
        if in_pixel and in_semantic:
            provenance = in_pixel if in_pixel == in_semantic else MERGED
        elif in_pixel:
            provenance = in_pixel
        elif in_semantic:
            provenance = in_semantic
        else:
            provenance = MERGED
        clusters.append(Cluster(members, provenance))
    failed = tuple(sorted(set(pixel.failed_ids) | set(semantic.failed_ids)))
    return DuplicateClusterSet(clusters=clusters, failed_ids=failed)


def duplicate_scores(clusters: DuplicateClusterSet, all_ids) -> dict:
    """1/len(cluster) for members, 1.0 for everything else."""
    scores = {image_id: 1.0 for image_id in all_ids}
    for cluster in clusters.clusters:
        value = 1.0 / len(cluster.members)
        for member in cluster.members:
            scores[member] = value
    return scores


def select_representatives(clusters: DuplicateClusterSet, policy: str = FIRST_BY_ID,
                           quality_scores=None) -> dict:
    """Pick the member to keep per cluster; everything else is removable.

    FIRST_BY_ID keeps the lexicographically smallest id. HIGHEST_MEAN_QUALITY
    keeps the member with the highest mean over its non-duplicate issue
    scores (ties fall back to smallest id) and requires `quality_scores`
    mapping id -> {kind: score}.
    """
    kept = {}
    for cluster in clusters.clusters:
        if policy == FIRST_BY_ID:
            kept[cluster.members] = min(cluster.members)
        elif policy == HIGHEST_MEAN_QUALITY:
            if quality_scores is None:
                raise ValueError("HIGHEST_MEAN_QUALITY needs quality_scores")

            def mean_quality(image_id):
                row = quality_scores.get(image_id, {})
                values = [v for k, v in row.items() if k not in _DUPLICATE_KINDS]
                return sum(values) / len(values) if values else 0.0

            kept[cluster.members] = min(
                cluster.members, key=lambda m: (-mean_quality(m), m)
            )
        else:
            raise ValueError(f"unknown representative policy {policy!r}")
    return kept


def removable_ids(clusters: DuplicateClusterSet, policy: str = FIRST_BY_ID,
                  quality_scores=None) -> set:
    """Cluster members minus the kept representative of each cluster."""
    kept = select_representatives(clusters, policy, quality_scores)
    out = set()
    for cluster in clusters.clusters:
        out.update(m for m in cluster.members if m != kept[cluster.members])
    return out
