"""Exception hierarchy shared by all wulfflab modules."""


class WulffLabError(Exception):
    """Base class; the CLI maps these to exit code 2."""


class InvalidInput(WulffLabError, ValueError):
    pass


class UnboundedShape(WulffLabError):
    """Tension directions do not positively span the space."""


class EmptyShape(WulffLabError):
    pass


class GaugeRatioExceeded(WulffLabError):
    def __init__(self, m_K, M_K, dim):
        self.m_K = m_K
        self.M_K = M_K
        super().__init__(
            f"M_K/m_K = {M_K / m_K:.6g} exceeds {dim} (m_K={m_K:.6g}, M_K={M_K:.6g})"
        )


class MixedRepresentation(WulffLabError):
    """Polygon and voxel sets were combined; rasterize first."""


class ResolutionTooCoarse(WulffLabError):
    pass


class DegenerateAsymmetry(WulffLabError):
    pass


class EmptyInterior(WulffLabError):
    pass


class CenterOutside(WulffLabError):
    pass


class DisconnectedDomain(WulffLabError):
    pass


class PointOutside(WulffLabError):
    pass


class SandwichViolated(WulffLabError):
    pass


class UndersampledCube(WulffLabError):
    pass


class Unreachable(WulffLabError):
    pass


class NonConvergence(WulffLabError):
    pass


class UnknownSuite(WulffLabError):
    pass
