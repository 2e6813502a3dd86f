"""Named, regenerable test domains and shape families.

Every fixture is a pure function of its name and parameters (plus a seed for
random families), so reports can be reproduced from the name alone.
"""

from __future__ import annotations

import numpy as np

from .anisotropy import WulffShape, disc, normalize_shape, polygon_shape, regular_polygon
from .errors import InvalidInput
from .geomset import GeomSet


def square_shape() -> WulffShape:
    """Square [-1, 1]^2 (not normalized)."""
    return polygon_shape([[-1, -1], [1, -1], [1, 1], [-1, 1]])


def hexagon_shape() -> WulffShape:
    return regular_polygon(6)


def wulff_corpus() -> dict[str, WulffShape]:
    """Normalized Wulff shapes used across the verification suites."""
    return {
        "disc": disc(1024),
        "square": normalize_shape(square_shape()),
        "hexagon": normalize_shape(hexagon_shape()),
    }


def unit_square(origin=(0.0, 0.0)) -> GeomSet:
    o = np.asarray(origin, dtype=float)
    return GeomSet.polygon(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float) + o)


def unit_disc(m: int = 1024, radius: float = 1.0, center=(0.0, 0.0)) -> GeomSet:
    th = 2 * np.pi * np.arange(m) / m
    return GeomSet.polygon(radius * np.column_stack([np.cos(th), np.sin(th)]) + np.asarray(center))


def l_shape() -> GeomSet:
    """[0,1]^2 with the quadrant [1/2,1]^2 removed."""
    return GeomSet.polygon([[0, 0], [1, 0], [1, 0.5], [0.5, 0.5], [0.5, 1], [0, 1]])


def square_with_hole() -> GeomSet:
    return GeomSet.polygon([[0, 0], [1, 0], [1, 1], [0, 1]],
                           [[0.25, 0.25], [0.25, 0.75], [0.75, 0.75], [0.75, 0.25]])


def cusp(samples: int = 400, tip_exponent: int = 16) -> GeomSet:
    """Outward cusp {0 < x < 1, |y| < x^2}, densely sampled near the tip."""
    xs = np.union1d(np.linspace(0.0, 1.0, samples),
                    np.geomspace(2.0 ** -tip_exponent, 0.1, samples))
    xs = xs[xs > 0]
    lower = np.column_stack([xs, -xs ** 2])
    upper = np.column_stack([xs[::-1], xs[::-1] ** 2])
    return GeomSet.polygon(np.vstack([[[0.0, 0.0]], lower, upper]))


def comb(k: int, height: float = 0.5, base: float = 0.25) -> GeomSet:
    """Base bar [0, 2] x [0, base] carrying 2^k teeth of width 2^-k."""
    w = 2.0 ** -k
    top = base + height
    pts = [[0.0, 0.0], [2.0, 0.0], [2.0, base]]
    for i in reversed(range(2 ** k)):
        x0, x1 = 2 * i * w, (2 * i + 1) * w
        pts += [[x1, base], [x1, top], [x0, top], [x0, base]]
    return GeomSet.polygon(pts)


def ellipse(t: float, K: WulffShape | None = None) -> GeomSet:
    """diag(1 + t, 1 / (1 + t)) applied to the polygon K (area preserving)."""
    K = disc(1024) if K is None else K
    A = np.diag([1.0 + t, 1.0 / (1.0 + t)])
    return GeomSet.polygon(K.vertices @ A.T)


def bumped_square(t: float, K: WulffShape | None = None, samples: int = 32) -> GeomSet:
    """Square K with its right side pushed out by a sine bump of height t*a.

    a is the half-side of K.  The result is rescaled to |K| and recentred at
    its barycenter, so it differs from K only in shape.
    """
    from .geomset import volume

    K = normalize_shape(square_shape()) if K is None else K
    a = float(np.max(K.vertices[:, 0]))
    ys = np.linspace(-a, a, samples + 1)[1:-1]
    bump = np.column_stack([a + t * a * np.sin(np.pi * (ys + a) / (2 * a)), ys])
    loop = np.vstack([[[-a, -a], [a, -a]], bump, [[a, a], [-a, a]]])
    E = GeomSet.polygon(loop)
    E = E.scale((K.volume / volume(E)) ** 0.5)
    return E.translate(-E.barycenter())


def random_star_polygon(rng: np.random.Generator, scale: float = 1.0, rmin: float = 0.3,
                        rmax: float = 1.5, vmin: int = 5, vmax: int = 40) -> GeomSet:
    """Star-shaped polygon about the origin with random angles and radii."""
    m = int(rng.integers(vmin, vmax + 1))
    while True:
        th = np.sort(rng.uniform(0, 2 * np.pi, m))
        gaps = np.diff(np.concatenate([th, [th[0] + 2 * np.pi]]))
        # gaps below pi keep the origin inside, so the polygon is star-shaped about it
        if np.all(gaps > 1e-3) and np.all(gaps < 0.9 * np.pi):
            break
    r = rng.uniform(rmin, rmax, m) * scale
    return GeomSet.polygon(np.column_stack([r * np.cos(th), r * np.sin(th)]))


def random_star_corpus(count: int, seed: int, **kw) -> list[GeomSet]:
    rng = np.random.default_rng(seed)
    return [random_star_polygon(rng, **kw) for _ in range(count)]


DOMAINS = {
    "square": unit_square,
    "disc": unit_disc,
    "l_shape": l_shape,
    "cusp": cusp,
    "square_with_hole": square_with_hole,
}

DOMAIN_CENTERS = {
    "square": (0.5, 0.5),
    "disc": (0.0, 0.0),
    "l_shape": (0.25, 0.25),
    "cusp": (0.6875, 0.0),
    "square_with_hole": (0.125, 0.5),
}


def domain(name: str) -> GeomSet:
    try:
        return DOMAINS[name]()
    except KeyError:
        raise InvalidInput(f"unknown domain fixture {name!r}; known: {sorted(DOMAINS)}") from None
