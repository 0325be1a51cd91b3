"""Exception types shared across the simulation modules."""


class CollisionError(Exception):
    """An inter-particle distance fell below the collision floor."""


class UnboundOrbit(Exception):
    """Bound-orbit quantity requested for a state with E >= 0."""


class DegenerateOrbit(Exception):
    """Radial orbit (M = 0): no well-defined ellipse to propagate."""


class NoConvergence(Exception):
    """An iterative solve failed to reach its tolerance."""


class DegenerateFace(Exception):
    """Third-smallest Gram eigenvalue is nonpositive: no 8-face area."""
