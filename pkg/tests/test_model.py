"""State spaces, kernels, and model validation."""

import numpy as np
import pytest

from contactlab.errors import ModelError, SpaceError
from contactlab.model import (Configuration, Kernel, RateModel, build_space,
                              kernel_eval, kernel_matrix, model_from_dict,
                              validate_model)

from conftest import nearest_stencil


class TestBuildSpace:
    def test_finite_counting_measure(self):
        sp = build_space({"type": "finite", "points": [0, 1, 2],
                          "weights": [1, 1, 1]})
        assert sp.size == 3
        assert sp.total_mass == 3.0

    def test_lattice_window_periodic(self):
        sp = build_space({"type": "lattice", "d": 3, "R": 1,
                          "boundary": "periodic"})
        assert sp.size == 27
        assert np.all(sp.weights == 1.0)

    def test_product_space(self):
        sp = build_space({"type": "product", "d": 1, "R": 1,
                          "boundary": "unbounded",
                          "marks": ["A", "B"], "nu": [0.5, 0.5]})
        assert sp.size == 6
        assert np.all(sp.weights == 0.5)

    def test_product_weights_marginalize(self):
        sp = build_space({"type": "product", "d": 1, "R": 1,
                          "boundary": "unbounded",
                          "marks": ["A", "B"], "nu": [0.3, 0.7]})
        for xi in (-1, 0, 1):
            mass = sum(sp.weights[sp.locate(((xi,), s))] for s in ("A", "B"))
            assert mass == pytest.approx(1.0)

    def test_rejects_bad_weight(self):
        with pytest.raises(SpaceError):
            build_space({"type": "finite", "points": [0, 1],
                         "weights": [1.0, 0.0]})

    def test_rejects_duplicates(self):
        with pytest.raises(SpaceError):
            build_space({"type": "finite", "points": [0, 0],
                         "weights": [1.0, 1.0]})

    def test_rejects_empty(self):
        with pytest.raises(SpaceError):
            build_space({"type": "finite", "points": [], "weights": []})

    def test_periodic_displacement_wraps(self):
        sp = build_space({"type": "lattice", "d": 1, "R": 2,
                          "boundary": "periodic"})
        assert sp.displacement((2,), (-2,)) == (-1,)

    def test_product_enumeration_row_major(self):
        sp = build_space({"type": "product", "d": 1, "R": 1,
                          "boundary": "unbounded",
                          "marks": ["A", "B"], "nu": [0.5, 0.5]})
        assert sp.points[0] == ((-1,), "A")
        assert sp.points[1] == ((-1,), "B")


class TestKernelEval:
    def test_dense_lookup(self):
        sp = build_space({"type": "finite", "points": [0, 1],
                          "weights": [1, 1]})
        A = np.array([[0.0, 2.5], [1.0, 0.0]])
        m = RateModel(birth=Kernel("dense", matrix=A), death=np.ones(2))
        assert kernel_eval(m, sp, 0, 1) == 2.5

    def test_nearest_neighbour_stencil(self):
        sp = build_space({"type": "lattice", "d": 3, "R": 1,
                          "boundary": "unbounded"})
        m = RateModel(birth=Kernel("stencil", stencil=nearest_stencil(3)),
                      death=np.ones(sp.size))
        assert kernel_eval(m, sp, (0, 0, 0), (1, 0, 0)) == pytest.approx(1 / 6)
        assert kernel_eval(m, sp, (0, 0, 0), (1, 1, 0)) == 0.0

    def test_factorized_product(self):
        sp = build_space({"type": "product", "d": 1, "R": 1,
                          "boundary": "unbounded",
                          "marks": ["A", "B"], "nu": [0.5, 0.5]})
        m = RateModel(birth=Kernel("factorized",
                                   stencil={(0,): 0.3}, Q=[[1.0, 2.0], [2.0, 1.0]]),
                      death=np.ones(sp.size))
        assert kernel_eval(m, sp, ((0,), "A"), ((0,), "B")) == pytest.approx(0.6)

    def test_even_stencil_symmetric(self):
        sp = build_space({"type": "lattice", "d": 2, "R": 1,
                          "boundary": "unbounded"})
        m = RateModel(birth=Kernel("stencil", stencil=nearest_stencil(2)),
                      death=np.ones(sp.size))
        for x in sp.points:
            for y in sp.points:
                assert kernel_eval(m, sp, x, y) == kernel_eval(m, sp, y, x)

    def test_unknown_point(self):
        sp = build_space({"type": "finite", "points": [0, 1],
                          "weights": [1, 1]})
        m = RateModel(birth=Kernel("dense", matrix=np.ones((2, 2))),
                      death=np.ones(2))
        with pytest.raises(SpaceError):
            kernel_eval(m, sp, 0, 99)


class TestValidateModel:
    def test_constant_death_passes(self):
        sp = build_space({"type": "finite", "points": [0, 1, 2],
                          "weights": [1, 1, 1]})
        m = RateModel(birth=Kernel("dense", matrix=np.ones((3, 3))),
                      death=np.ones(3))
        diags = validate_model(m, sp)
        assert diags["V_min"] == diags["V_max"] == 1.0
        assert diags["passed"]

    def test_nonpositive_death_flagged(self):
        sp = build_space({"type": "finite", "points": [0, 1, 2],
                          "weights": [1, 1, 1]})
        m = RateModel(birth=Kernel("dense", matrix=np.ones((3, 3))),
                      death=np.array([1.0, 0.0, 2.0]))
        diags = validate_model(m, sp)
        assert not diags["V_positive"]
        assert not diags["passed"]

    def test_row_mass_nearest_neighbour(self):
        sp = build_space({"type": "lattice", "d": 3, "R": 1,
                          "boundary": "periodic"})
        m = RateModel(birth=Kernel("stencil", stencil=nearest_stencil(3)),
                      death=np.ones(sp.size))
        diags = validate_model(m, sp)
        assert diags["sup_row_mass"] == pytest.approx(1.0)
        assert diags["passed"]


class TestConfiguration:
    def test_counts_nonnegative(self):
        sp = build_space({"type": "finite", "points": [0, 1],
                          "weights": [1, 1]})
        cfg = Configuration(sp, [2, 0])
        assert cfg.counts.sum() == 2
        with pytest.raises(ModelError):
            Configuration(sp, [1, -1])


class TestModelFromDict:
    def test_round_trip(self, tmp_path):
        cfg = {"space": {"type": "lattice", "d": 3, "R": 1,
                         "boundary": "unbounded"},
               "birth": {"form": "stencil", "entries": "nearest", "rate": 1.0},
               "death": 1.0}
        sp, m = model_from_dict(cfg)
        assert sp.size == 27
        K = kernel_matrix(m.birth, sp)
        assert K[sp.locate((0, 0, 0)), sp.locate((1, 0, 0))] == pytest.approx(1 / 6)

    def test_missing_keys(self):
        with pytest.raises(ModelError):
            model_from_dict({"space": {"type": "finite", "points": [0],
                                       "weights": [1]}})

    def test_per_mark_death(self):
        cfg = {"space": {"type": "product", "d": 1, "R": 1,
                         "boundary": "unbounded",
                         "marks": ["A", "B"], "nu": [0.5, 0.5]},
               "birth": {"form": "factorized", "alpha": "nearest",
                         "Q": [[2, 1], [1, 2]]},
               "death": {"per_mark": [1.0, 3.0]}}
        sp, m = model_from_dict(cfg)
        assert m.death[sp.locate(((0,), "B"))] == 3.0
