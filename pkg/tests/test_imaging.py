import numpy as np
import pytest

from rbirg.imaging import (BlurKernel, GrayImage, PgmParseError, apply_blur,
                           blur_matrix, gaussian_kernel, image_from_vector,
                           load_kernel, make_deblur_instance, make_kernel,
                           read_pgm, write_pgm)
from rbirg.problems import min_norm_oracle

UNIFORM3 = make_kernel(np.ones((3, 3)))
IDENTITY1 = make_kernel([[1.0]])


def random_image(w, h, seed):
    rng = np.random.default_rng(seed)
    return GrayImage(width=w, height=h, pixels=rng.uniform(size=(h, w)))


class TestKernels:
    def test_normalization(self):
        assert UNIFORM3.taps.sum() == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(UNIFORM3.taps, np.full((3, 3), 1 / 9))

    def test_gaussian_kernel_properties(self):
        k = gaussian_kernel(5, 1.0)
        assert k.size == 5
        assert k.taps.sum() == pytest.approx(1.0, abs=1e-12)
        assert k.taps[2, 2] == k.taps.max()
        np.testing.assert_allclose(k.taps, k.taps.T, atol=0)

    def test_even_size_rejected(self):
        with pytest.raises(ValueError):
            make_kernel(np.ones((2, 2)))

    def test_negative_taps_rejected(self):
        with pytest.raises(ValueError):
            make_kernel([[1.0, -0.5, 0.5]] * 3)

    def test_unnormalized_constructor_rejected(self):
        with pytest.raises(ValueError):
            BlurKernel(taps=np.ones((3, 3)))

    def test_load_from_text_grid(self, tmp_path):
        path = tmp_path / "k.txt"
        path.write_text("0 1 0\n1 4 1\n0 1 0\n")
        k = load_kernel(path)
        assert k.taps[1, 1] == pytest.approx(0.5)
        assert k.taps.sum() == pytest.approx(1.0, abs=1e-15)


class TestBlurMatrix:
    def test_identity_kernel(self):
        M = blur_matrix(IDENTITY1, 4, 3, "zero")
        assert np.array_equal(M, np.eye(12))

    def test_center_row_uniform(self):
        M = blur_matrix(UNIFORM3, 3, 3, "zero")
        center = M[4]
        np.testing.assert_allclose(center, np.full(9, 1 / 9), atol=1e-15)

    def test_corner_row_zero_boundary(self):
        M = blur_matrix(UNIFORM3, 3, 3, "zero")
        corner = M[0]
        assert np.count_nonzero(corner) == 4
        np.testing.assert_allclose(corner[corner > 0], 1 / 9, atol=1e-15)
        assert corner.sum() == pytest.approx(4 / 9, abs=1e-15)

    def test_replicate_rows_sum_to_one(self):
        M = blur_matrix(gaussian_kernel(5, 1.0), 6, 5, "replicate")
        np.testing.assert_allclose(M.sum(axis=1), 1.0, atol=1e-12)

    def test_zero_boundary_interior_rows_sum_to_one(self):
        M = blur_matrix(UNIFORM3, 5, 5, "zero")
        interior = [y * 5 + x for y in range(1, 4) for x in range(1, 4)]
        np.testing.assert_allclose(M[interior].sum(axis=1), 1.0, atol=1e-12)

    def test_size_overflow(self):
        with pytest.raises(ValueError):
            blur_matrix(UNIFORM3, 65, 65, "zero")

    def test_unknown_boundary(self):
        with pytest.raises(ValueError):
            blur_matrix(UNIFORM3, 4, 4, "mirror")


class TestApplyBlur:
    def test_identity_kernel_is_noop(self):
        img = random_image(6, 4, 0)
        out = apply_blur(IDENTITY1, img, "zero")
        assert np.array_equal(out.pixels, img.pixels)

    def test_constant_image_replicate_invariant(self):
        img = GrayImage(width=5, height=5, pixels=np.full((5, 5), 0.37))
        out = apply_blur(UNIFORM3, img, "replicate")
        np.testing.assert_allclose(out.pixels, 0.37, atol=1e-15)

    def test_impulse_response_is_kernel(self):
        px = np.zeros((5, 5))
        px[2, 2] = 1.0
        out = apply_blur(UNIFORM3, GrayImage(width=5, height=5, pixels=px), "zero")
        np.testing.assert_allclose(out.pixels[1:4, 1:4], 1 / 9, atol=1e-15)
        assert out.pixels[0].sum() == 0.0

    @pytest.mark.parametrize("boundary", ["zero", "replicate"])
    def test_matches_matrix_on_random_images(self, boundary):
        kernel = gaussian_kernel(3, 0.8)
        M = blur_matrix(kernel, 8, 7, boundary)
        for seed in range(100):
            img = random_image(8, 7, seed)
            direct = apply_blur(kernel, img, boundary).pixels.ravel()
            via_matrix = M @ img.pixels.ravel()
            assert np.max(np.abs(direct - via_matrix)) <= 1e-12


class TestPgm:
    def test_ascii_endpoints(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P2 2 1 255\n0 255\n")
        img = read_pgm(path)
        assert (img.width, img.height) == (2, 1)
        assert np.array_equal(img.pixels, [[0.0, 1.0]])

    def test_binary_round_trip_byte_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        img = GrayImage(width=9, height=5,
                        pixels=rng.integers(0, 256, size=(5, 9)) / 255.0)
        p1, p2 = tmp_path / "x1.pgm", tmp_path / "x2.pgm"
        write_pgm(img, p1)
        write_pgm(read_pgm(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_ascii_round_trip(self, tmp_path):
        img = random_image(4, 3, 2)
        path = tmp_path / "a.pgm"
        write_pgm(img, path, binary=False)
        back = read_pgm(path)
        assert np.max(np.abs(back.pixels - img.pixels)) <= 0.5 / 255 + 1e-12

    def test_comments_and_whitespace(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P2\n# a comment\n 3 # trailing\n2\n7\n"
                         b"0 1 2 3 4 5\n")
        img = read_pgm(path)
        assert (img.width, img.height) == (3, 2)
        assert img.pixels[1, 2] == pytest.approx(5 / 7)

    def test_truncated_binary_payload(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + b"\x00" * 10)
        with pytest.raises(PgmParseError) as exc:
            read_pgm(path)
        assert "expected 16 payload bytes, found 10" in str(exc.value)
        assert "byte offset" in str(exc.value)

    def test_sixteen_bit_samples(self, tmp_path):
        path = tmp_path / "w.pgm"
        img = GrayImage(width=3, height=2,
                        pixels=np.linspace(0, 1, 6).reshape(2, 3))
        write_pgm(img, path, maxval=65535)
        back = read_pgm(path)
        assert np.max(np.abs(back.pixels - img.pixels)) <= 0.5 / 65535 + 1e-12

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "b.pgm"
        path.write_bytes(b"P6 1 1 255\n\x00\x00\x00")
        with pytest.raises(PgmParseError):
            read_pgm(path)

    def test_maxval_out_of_range(self, tmp_path):
        path = tmp_path / "m.pgm"
        path.write_bytes(b"P2 1 1 70000\n0\n")
        with pytest.raises(PgmParseError):
            read_pgm(path)

    def test_header_garbage_offset(self, tmp_path):
        path = tmp_path / "g.pgm"
        path.write_bytes(b"P2 xx 1 255\n0\n")
        with pytest.raises(PgmParseError) as exc:
            read_pgm(path)
        assert exc.value.offset == 3


class TestGrayImage:
    def test_range_enforced(self):
        with pytest.raises(ValueError):
            GrayImage(width=2, height=1, pixels=np.array([[0.0, 1.5]]))

    def test_shape_enforced(self):
        with pytest.raises(ValueError):
            GrayImage(width=2, height=2, pixels=np.zeros((2, 3)))

    def test_from_vector_clamps(self):
        img = image_from_vector(np.array([-0.5, 0.2, 1.7, 1.0]), 2, 2)
        assert np.array_equal(img.pixels, [[0.0, 0.2], [1.0, 1.0]])


class TestDeblurInstance:
    def test_identity_kernel_oracle_returns_input(self):
        img = random_image(4, 4, 3)
        inst, prob = make_deblur_instance(img, IDENTITY1, "zero", num_blocks=2)
        np.testing.assert_allclose(min_norm_oracle(inst), img.flatten(),
                                   atol=1e-10)
        assert prob.structured
        assert prob.blocks.d == 2

    def test_block_partition_with_tail(self):
        img = random_image(8, 8, 4)
        _, prob = make_deblur_instance(img, UNIFORM3, "replicate", num_blocks=6)
        assert prob.blocks.block_sizes == (11, 11, 11, 11, 11, 9)

    def test_too_many_blocks_rejected(self):
        img = random_image(2, 2, 5)
        with pytest.raises(ValueError):
            make_deblur_instance(img, IDENTITY1, "zero", num_blocks=3)

    def test_noise_is_seeded(self):
        img = random_image(4, 4, 6)
        i1, _ = make_deblur_instance(img, UNIFORM3, "zero", noise_sigma=0.01,
                                     noise_seed=9)
        i2, _ = make_deblur_instance(img, UNIFORM3, "zero", noise_sigma=0.01,
                                     noise_seed=9)
        i3, _ = make_deblur_instance(img, UNIFORM3, "zero", noise_sigma=0.01,
                                     noise_seed=10)
        assert np.array_equal(i1.b, i2.b)
        assert not np.array_equal(i1.b, i3.b)

    def test_blurred_vector_is_b_when_noise_free(self):
        img = random_image(5, 3, 7)
        inst, _ = make_deblur_instance(img, UNIFORM3, "replicate")
        assert np.array_equal(inst.b, img.flatten())

    def test_impulse_deblur_reblur_residual(self):
        # 8x8 impulse through the uniform kernel: re-blur of the averaged
        # iterate matches b; bound frozen from a pilot run (0.0076 + 20%)
        from rbirg.core import make_schedule
        from rbirg.solver import run_rbirg
        px = np.zeros((8, 8))
        px[4, 4] = 1.0
        impulse = GrayImage(width=8, height=8, pixels=px)
        blurred = apply_blur(UNIFORM3, impulse, "zero")
        inst, prob = make_deblur_instance(blurred, UNIFORM3, "zero", num_blocks=2)
        sched = make_schedule(0.95, 5e-4, delta=0.25, r=0.5)
        trace = run_rbirg(prob, sched, 100_000, x0=inst.b, seed=2,
                          checkpoints=[100_000])
        residual = np.linalg.norm(inst.A @ trace.final.x_bar - inst.b)
        assert residual <= 9.1e-3
