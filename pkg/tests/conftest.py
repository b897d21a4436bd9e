import pytest

from incproc import WalkSpec


@pytest.fixture(scope="session")
def cycle3():
    return WalkSpec.cycle(3, 0.7)


@pytest.fixture(scope="session")
def two_sym():
    return WalkSpec.from_matrix([[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture(scope="session")
def two_asym():
    return WalkSpec.from_matrix([[0.0, 2.0], [1.0, 0.0]])


@pytest.fixture(scope="session")
def up3():
    # uniformly positive, neither reversible nor uniform-measure
    return WalkSpec.from_matrix([[0.0, 1.0, 0.5],
                                 [0.3, 0.0, 1.2],
                                 [0.8, 0.4, 0.0]])


@pytest.fixture(scope="session")
def chain4():
    # drift edges 0->1 and 3->2 only; recurrent set {1, 2} is attracting
    return WalkSpec.from_matrix([[0.0, 2.0, 0.0, 0.0],
                                 [1.0, 0.0, 1.0, 0.0],
                                 [0.0, 1.0, 0.0, 1.0],
                                 [0.0, 0.0, 2.0, 0.0]])
