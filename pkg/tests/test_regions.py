import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gmclab.errors import DomainError
from gmclab.regions import (Annulus, Disk, Everything, Interval, Nothing, Square, as_region,
                            max_ray, parse_region, region_diameter)


@pytest.mark.parametrize("text,cls,area", [
    ("disk(0,0,0.5)", Disk, math.pi / 4),
    ("square(0.5, 0.5, 1)", Square, 1.0),
    ("annulus(0,0,0.25,0.5)", Annulus, math.pi * (0.25 - 0.0625)),
    ("interval(0,1)", Interval, 1.0),
])
def test_parse_and_area(text, cls, area):
    r = parse_region(text)
    assert isinstance(r, cls)
    assert r.area == pytest.approx(area)
    assert parse_region(r.spec()).area == pytest.approx(area)


@pytest.mark.parametrize("text", ["blob(0,0,1)", "disk(0,0)", "disk(a,0,1)", "", "disk 0 0 1"])
def test_parse_errors(text):
    with pytest.raises(DomainError):
        parse_region(text)


def test_contains():
    d = Disk(0, 0, 0.5)
    assert d.contains(np.array([0.1 + 0.1j, 0.6]))[0]
    assert not d.contains(np.array([0.6 + 0j]))[0]
    assert Everything().contains(np.array([5.0 + 5j]))[0]
    assert not Nothing().contains(np.array([0j]))[0]


@given(st.integers(0, 2 ** 32 - 1), st.booleans())
def test_uniform_samples_inside(seed, stratified):
    r = np.random.default_rng(seed)
    for reg in (Disk(0.1, -0.2, 0.4), Square(0, 0, 1), Annulus(0, 0, 0.2, 0.5), Interval(0, 1)):
        z, labels = reg.sample_uniform(r, 64, stratified=stratified)
        assert np.all(reg.contains(z))
        assert labels.shape == (64,)


def test_disk_ray_length():
    d = Disk(0, 0, 0.5)
    assert d.ray_length(np.array(0j), np.array([0.0, 1.0])) == pytest.approx([0.5, 0.5])
    assert max_ray(d, np.array([0.25 + 0j]))[()] == pytest.approx(0.75, rel=1e-3)


def test_grid_nodes_area():
    d = Disk(0, 0, 0.5)
    h = 1 / 64
    assert d.grid_nodes(h).size * h * h == pytest.approx(d.area, rel=0.02)


def test_diameter_and_as_region():
    assert region_diameter(Disk(0, 0, 0.5)) == 1.0
    assert region_diameter(Square(0, 0, 1)) == pytest.approx(math.sqrt(2))
    assert as_region(None) is None
    assert isinstance(as_region("interval(0,1)"), Interval)
