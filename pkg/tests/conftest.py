import numpy as np

from latentgeom import ChainParams, JointTable, MarginalTable, Shape, random_chain


def seeded_chain(shape: tuple[int, int, int], seed: int,
                 floor: float = 0.02) -> ChainParams:
    """Interior chain parameters, reproducible and away from the boundary."""
    return random_chain(Shape(*shape), np.random.default_rng(seed),
                        min_entry=floor)


def seeded_joint(shape: tuple[int, int, int], seed: int) -> JointTable:
    """A generic (not conditionally independent) joint table."""
    rng = np.random.default_rng(seed)
    sh = Shape(*shape)
    return JointTable.from_flat(sh, rng.dirichlet(np.ones(sh.ncells)))


def seeded_marginal(shape: tuple[int, int], seed: int) -> MarginalTable:
    rng = np.random.default_rng(seed)
    return MarginalTable(shape, rng.dirichlet(
        np.ones(shape[0] * shape[1])).reshape(shape))
