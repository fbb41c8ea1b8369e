"""Test the observation encoding."""

from itertools import product

import numpy as np
import pytest

from cyrange.engine import Engine
from cyrange.observation import (
    ColumnSpec,
    ObsCategory,
    ObservationError,
    ObservationLayout,
    apply_delta,
    default_layout,
    encode_delta,
    encode_full,
    obs_space_size,
    observation_to_csv,
)
from cyrange.scenario import Privilege
from cyrange.state import Fact, FactDB, FactKind, Hand, WorldState, hand_fact


def _facts(host_ids):
    """A user hand on the first host, local users on the second, an OS on the third."""
    first, second, third = host_ids
    return (
        FactDB()
        .add_host_facts(first, [hand_fact(0, Privilege.USER)])
        .add_host_facts(second, [Fact(FactKind.LOCAL_USER, f"user{i}@x") for i in range(9)])
        .add_host_facts(third, [Fact(FactKind.OS, "ubuntu"), Fact(FactKind.ROLE, "domain_controller")])
        .add_network_facts([Fact(FactKind.DOMAIN_NAME, "corp.local")])
    )


def test_default_layout():
    """Test the shape and category coverage of the default layout."""
    layout = default_layout()

    assert layout.n_columns == 13
    assert layout.shape == (17, 13)
    assert layout.missing_categories() == []
    assert layout.cardinalities[:3] == (2, 4, 8)


def test_layout_validation():
    """Test layout construction errors."""
    with pytest.raises(ValueError, match="cardinality"):
        ColumnSpec("x", ObsCategory.HAND, 1)
    with pytest.raises(ValueError, match="max_host_rows"):
        ObservationLayout(columns=default_layout().columns, max_host_rows=0)
    with pytest.raises(ValueError, match="at least one column"):
        ObservationLayout(columns=())


def test_encode_full():
    """Test cell values of a hand-built fact database."""
    obs = encode_full(_facts((2, 6, 9)))

    assert obs.shape == (17, 13)
    assert obs.dtype == np.int64
    np.testing.assert_array_equal(obs[0], [1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0])
    assert obs[1, :2].tolist() == [1, 1]
    assert obs[2, 2] == 7
    assert obs[3, 4:6].tolist() == [2, 1]
    assert not obs[4:].any()


def test_encode_full_within_cardinalities(game2, registry):
    """Test that every cell stays below its column cardinality."""
    engine = Engine(game2, registry=registry)
    rng = np.random.default_rng(3)
    limits = np.array(engine.layout.cardinalities)
    obs = engine.reset(11)
    while not engine.done:
        assert (obs >= 0).all()
        assert (obs < limits).all()
        obs = engine.step(int(rng.integers(engine.action_count))).observation


def test_encode_full_hides_host_ids():
    """Test that renumbering hosts leaves the observation unchanged."""
    np.testing.assert_array_equal(encode_full(_facts((2, 6, 9))), encode_full(_facts((40, 3, 17))))


def test_encode_full_overflow():
    """Test that more discovered hosts than rows is an error."""
    layout = default_layout(max_host_rows=2)

    with pytest.raises(ObservationError, match="max_host_rows=2"):
        encode_full(_facts((1, 2, 3)), layout=layout)


def test_encode_full_hand_mismatch(game2):
    """Test that a live hand must appear in the facts."""
    world = WorldState(scenario=game2, hands=(Hand(0, 2, Privilege.ADMIN),))

    with pytest.raises(ObservationError, match="not reflected"):
        encode_full(_facts((2, 6, 9)), world)


def test_encode_delta_reconstructs(game2, registry):
    """Test that overlaying deltas reproduces full encodings along a random episode."""
    engine = Engine(game2, registry=registry)
    rng = np.random.default_rng(5)
    obs = engine.reset(1)
    while not engine.done:
        before = engine.facts
        result = engine.step(int(rng.integers(engine.action_count)))
        delta = encode_delta(before, engine.facts)
        np.testing.assert_array_equal(apply_delta(obs, delta), result.observation)
        assert all(not np.array_equal(obs[row.row], row.values) for row in delta)
        obs = result.observation


@pytest.mark.parametrize("name", ["game1", "game2"])
def test_random_walk_invariants(name, request, registry):
    """Test bounds, monotone knowledge and delta reconstruction over 10k random steps."""
    engine = Engine(request.getfixturevalue(name), registry=registry)
    layout = engine.layout
    limits = np.array(layout.cardinalities)
    knowledge = np.array(
        [column.category is not ObsCategory.ACTION_OUTCOME for column in layout.columns]
    )
    rng = np.random.default_rng(17)
    episode = 0
    obs = engine.reset(episode)
    for _ in range(10_000):
        if engine.done:
            episode += 1
            obs = engine.reset(episode)
        before = engine.facts
        result = engine.step(int(rng.integers(engine.action_count)))
        new = result.observation

        assert new.dtype == np.int64
        assert (new >= 0).all() and (new < limits).all()
        assert (new[:, knowledge] >= obs[:, knowledge]).all()
        np.testing.assert_array_equal(apply_delta(obs, encode_delta(before, engine.facts)), new)
        obs = new


def test_encode_delta_rejects_shrinking():
    """Test that facts may only grow between observations."""
    with pytest.raises(ObservationError, match="shrank"):
        encode_delta(_facts((2, 6, 9)), FactDB())


def test_encode_delta_network_row():
    """Test that a new network fact is reported on row 0."""
    before = _facts((2, 6, 9))
    after = before.add_network_facts([Fact(FactKind.ORG_INFO, "org")])

    delta = encode_delta(before, after)

    assert [row.row for row in delta] == [0]
    assert delta[0].is_network


def test_obs_space_size_default():
    """Test the size of the default observation space."""
    layout = default_layout()
    per_row = 2**9 * 4 * 8 * 3**2

    assert obs_space_size(layout, 1) == per_row
    assert obs_space_size(layout, 17) == per_row**17
    with pytest.raises(ValueError):
        obs_space_size(layout, 0)


@pytest.mark.parametrize(
    "cardinalities, rows",
    [((2,), 1), ((2, 3), 2), ((3, 3, 2), 1), ((2, 2, 3, 3), 2), ((3, 2, 2, 2), 2)],
)
def test_obs_space_size_enumeration(cardinalities, rows):
    """Test the closed form against enumerating every matrix."""
    layout = ObservationLayout(
        columns=tuple(ColumnSpec(f"c{i}", ObsCategory.HAND, n) for i, n in enumerate(cardinalities)),
        max_host_rows=rows,
    )
    cells = [range(n) for _ in range(rows) for n in cardinalities]

    assert obs_space_size(layout, rows) == len(set(product(*cells)))


def test_observation_to_csv():
    """Test the CSV dump of an observation."""
    text = observation_to_csv(encode_full(_facts((2, 6, 9)), layout=default_layout(3)), default_layout(3))
    lines = text.splitlines()

    assert lines[0].startswith("row,hand_present,hand_privilege,local_users_found")
    assert lines[1] == "network,1,0,0,0,0,0,0,0,0,0,0,0,0"
    assert lines[2].startswith("host1,1,1,")
    assert len(lines) == 5
