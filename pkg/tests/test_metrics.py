import math

import numpy as np
import pytest

from aliasfree.fourier import Transform2D, sample_bank, synthesize_input
from aliasfree.metrics import (
    PSNR_CAP, EquivReport, MetricError, eq_r, eq_t_frac, eq_t_integer, psnr, psnr_from_mse,
    pseudo_rotate_image, pseudo_rotation_filter, reports_csv, rotate_image, rotation_filter,
    translate_integer, valid_region_fractional, valid_region_integer,
)


class Bandlimited:
    """Exactly equivariant handle: a fixed band-limited function sampled on the canvas."""

    def __init__(self, resolution=64, band=8.0, seed=0, channels=3):
        self.resolution = resolution
        self.bank = sample_bank(channels, band, seed)

    def draw_latents(self, count, rng):
        return [Transform2D.from_angle(rng.uniform(0, 2 * math.pi), rng.uniform(-0.5, 0.5, 2)) for _ in range(count)], None

    def render(self, transforms, styles=None):
        return np.stack([synthesize_input(self.bank, t, self.resolution, 0).data / 2 for t in transforms])


class Snapped(Bandlimited):
    """Breaks sub-pixel equivariance by rounding translations to whole pixels."""

    def render(self, transforms, styles=None):
        s = self.resolution
        snapped = [Transform2D(t.rc, t.rs, round(t.tx * s) / s, round(t.ty * s) / s) for t in transforms]
        return super().render(snapped)


class TestPsnr:
    def test_values(self):
        a = np.zeros((3, 8, 8))
        assert psnr(a, a) == PSNR_CAP
        assert psnr(a, a + 2.0) == pytest.approx(0.0)
        assert psnr(a, a + 0.2) == pytest.approx(20.0)
        assert psnr_from_mse(0.0) == PSNR_CAP

    def test_mask_and_errors(self):
        a, b = np.zeros((4, 4)), np.zeros((4, 4))
        b[0, 0] = 100
        mask = np.ones((4, 4), bool)
        mask[0, 0] = False
        assert psnr(a, b, mask=mask) == PSNR_CAP
        with pytest.raises(MetricError):
            psnr(a, b, mask=np.zeros((4, 4), bool))
        with pytest.raises(MetricError):
            psnr(a, np.zeros((3, 3)))

    def test_report_pools_pixels(self):
        r = EquivReport("X")
        m = np.ones((2, 2), bool)
        r.add(np.zeros((1, 2, 2)), np.full((1, 2, 2), 0.2), m)
        r.add(np.zeros((1, 2, 2)), np.zeros((1, 2, 2)), m)
        assert r.samples == 2 and r.pixels == 8
        assert r.mse == pytest.approx(0.02)
        assert r.psnr_db == pytest.approx(10 * math.log10(4 / 0.02))
        lines = reports_csv([r]).splitlines()
        assert lines[0] == "metric,psnr_db,samples,pixels" and lines[1].startswith("X,")
        with pytest.raises(MetricError):
            EquivReport("Y").psnr_db


class TestRegions:
    def test_integer_cardinality(self):
        for x0, x1 in [(0, 0), (3, -2), (-8, 8)]:
            assert valid_region_integer(32, (x0, x1)).sum() == (32 - abs(x0)) * (32 - abs(x1))

    def test_integer_orientation(self):
        m = valid_region_integer(8, (2, 0))
        assert not m[:, :2].any() and m[:, 2:].all()
        m = valid_region_integer(8, (0, -3))
        assert m[:5].all() and not m[5:].any()

    def test_fractional(self):
        m = valid_region_fractional(32, (0.5, -1.25), 3)
        cols = m.any(axis=0).nonzero()[0]
        rows = m.any(axis=1).nonzero()[0]
        assert (cols[0], cols[-1]) == (4, 29)
        assert (rows[0], rows[-1]) == (2, 27)

    def test_translate_integer(self):
        img = np.arange(16.0).reshape(4, 4)
        out = translate_integer(img, (1, 0))
        np.testing.assert_array_equal(out[:, 1:], img[:, :-1])
        assert not out[:, 0].any()


class TestRotationFilters:
    def test_zero_angle_filter_symmetric(self):
        f = rotation_filter(0.0, up=1)
        np.testing.assert_allclose(f.taps, f.taps.T, atol=1e-12)
        np.testing.assert_allclose(f.taps, f.taps[::-1, ::-1], atol=1e-12)
        assert f.taps.sum() == pytest.approx(1.0)

    def test_quarter_turn_invariance(self):
        a = rotation_filter(0.3, up=1).taps
        b = rotation_filter(0.3 + math.pi / 2, up=1).taps
        np.testing.assert_allclose(a, b, atol=1e-9)
        c = rotation_filter(0.3 + math.pi, up=1).taps
        np.testing.assert_allclose(a, c, atol=1e-9)

    def test_quarter_turn_rotates_taps(self):
        a = rotation_filter(0.0, up=1).taps
        b = rotation_filter(math.pi / 2, up=1).taps
        np.testing.assert_allclose(b, np.rot90(a), atol=1e-12)

    def test_pseudo_is_mirror_angle(self):
        np.testing.assert_allclose(pseudo_rotation_filter(0.4).taps, rotation_filter(-0.4, up=1).taps)
        # mirroring the kernel is the same as negating the angle
        np.testing.assert_allclose(rotation_filter(0.4, up=1).taps, rotation_filter(-0.4, up=1).taps[:, ::-1], atol=1e-9)

    def test_polyphase_components_sum_to_one(self):
        f = rotation_filter(0.5)
        assert f.meta["up"] == 4 and f.rate == 4
        half = f.taps.shape[0] // 2
        phase = (np.arange(f.taps.shape[0]) - half) % 4
        for ry in range(4):
            for rx in range(4):
                assert f.taps[np.ix_(phase == ry, phase == rx)].sum() == pytest.approx(1.0)

    def test_rotate_zero_angle_of_smooth_content(self):
        img = Bandlimited(64).render([Transform2D()])[0]
        out, mask = rotate_image(img, 0.0)
        assert mask.any()
        assert psnr(img, out, mask=mask) > 50

    def test_rotate_matches_analytic_rotation(self):
        h = Bandlimited(64, band=6.0)
        img = h.render([Transform2D()])[0]
        ang = 0.7
        ref = h.render([Transform2D.from_angle(ang)])[0]
        out, mask = rotate_image(img, ang)
        pr, pmask = pseudo_rotate_image(ref, ang)
        assert psnr(out, pr, mask=mask & pmask) > 50

    def test_pseudo_rotate_mask(self):
        _, mask = pseudo_rotate_image(np.zeros((3, 32, 32)), 0.2)
        assert mask.sum() == (32 - 10) ** 2


class TestMetrics:
    def test_exact_handle_integer(self):
        rep = eq_t_integer(Bandlimited(), samples=8, seed=1)
        assert rep.samples == 8 and rep.psnr_db > 200

    def test_zero_offset_hits_cap(self):
        rep = eq_t_integer(Bandlimited(), samples=4, offset_set=[(0, 0)])
        assert rep.psnr_db == PSNR_CAP
        assert eq_r(Bandlimited(), samples=2, angle_set=[0.0]).psnr_db > 50

    def test_fractional_on_smooth_content(self):
        assert eq_t_frac(Bandlimited(), samples=8, seed=2).psnr_db > 45

    def test_fractional_detects_snapping(self):
        good = eq_t_frac(Bandlimited(), samples=8, seed=2).psnr_db
        bad = eq_t_frac(Snapped(), samples=8, seed=2).psnr_db
        assert bad < good - 10

    def test_rotation_on_smooth_content(self):
        assert eq_r(Bandlimited(band=6.0), samples=4, seed=0).psnr_db > 50

    def test_deterministic_and_shared(self):
        a = eq_t_frac(Bandlimited(), samples=6, seed=3, offsets_per_latent=3)
        b = eq_t_frac(Bandlimited(), samples=6, seed=3, offsets_per_latent=3)
        assert a.psnr_db == b.psnr_db and a.samples == 6
