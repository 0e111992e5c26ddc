"""Pure-pixel endmember initializer.

A minimal successive-projection scheme: the first pick is the pixel
farthest from the image mean, and each following pick maximizes the
distance to the affine hull of the spectra selected so far (simplex
vertices are affinely independent, so on data containing pure pixels
the true vertices are recovered).  Selected spectra are always actual
image columns; on mixed data the output only seeds the endmember-mean
prior.
"""

from __future__ import annotations

import numpy as np

from .data import EndmemberLibrary, HsiCube
from .errors import RankDeficiencyError

CLIP = 1e-6
_RANK_TOL = 1e-10


def extract_endmembers(Y: HsiCube, R: int) -> EndmemberLibrary:
    """Select R pixel spectra by successive affine-hull projection.

    Deterministic; ties break toward the lowest pixel index.  Raises
    RankDeficiencyError when the image's affine span has fewer than R
    vertices' worth of directions (e.g. a constant image).
    """
    refl = Y.reflectance
    L, N = refl.shape
    if R < 1:
        raise ValueError("R must be at least 1")
    if N < R:
        raise ValueError(f"need at least R={R} pixels, image has {N}")
    centered = refl - refl.mean(axis=1, keepdims=True)
    norms2 = np.einsum("ln,ln->n", centered, centered)
    scale = float(np.max(norms2))
    if scale <= 0.0:
        raise RankDeficiencyError("image is constant")
    first = int(np.argmax(norms2))
    picks = [first]
    # residual of y_n against the affine hull of the picks: start from
    # offsets to the anchor, then project out each new hull direction
    residual = refl - refl[:, first : first + 1]
    for _ in range(R - 1):
        norms2 = np.einsum("ln,ln->n", residual, residual)
        best = int(np.argmax(norms2))
        if norms2[best] <= _RANK_TOL * scale:
            raise RankDeficiencyError(
                f"image spans fewer than R={R} affinely independent spectra "
                f"(got {len(picks)})"
            )
        picks.append(best)
        direction = residual[:, best] / np.sqrt(norms2[best])
        residual -= direction[:, None] * np.einsum("l,ln->n", direction, residual)
    means = np.clip(refl[:, picks], CLIP, 1.0 - CLIP)
    names = [f"pixel_{n}" for n in picks]
    return EndmemberLibrary(names=names, means=means)


def projection_features(Y: HsiCube, lib: EndmemberLibrary) -> np.ndarray:
    """Coordinates of each centered pixel in the orthonormalized span of
    the centered library spectra; used to seed the label clustering."""
    refl = Y.reflectance
    centered = refl - refl.mean(axis=1, keepdims=True)
    basis = []
    vecs = lib.means - refl.mean(axis=1, keepdims=True)
    for j in range(vecs.shape[1]):
        v = vecs[:, j].copy()
        for b in basis:
            v -= b * np.dot(b, v)
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            basis.append(v / norm)
    if not basis:
        return np.zeros((1, refl.shape[1]))
    B = np.stack(basis)  # (n_dirs, L)
    return np.einsum("dl,ln->dn", B, centered)
