"""The compiled kernels must agree with the numpy fallback."""

import numpy as np
import pytest

from ndnet.nn import _backend, _pykernels

from conftest import BACKENDS

pytestmark = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


@pytest.fixture(scope="module")
def ck():
    return _backend.load("cython")


@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-5), (np.float64, 1e-12)])
@pytest.mark.parametrize("kh,kw,sh,sw", [(3, 3, 1, 1), (3, 3, 2, 2), (2, 3, 1, 2), (1, 1, 1, 1)])
def test_im2col_col2im_parity(ck, rng, dtype, tol, kh, kw, sh, sw):
    xpad = rng.standard_normal((2, 3, 9, 8)).astype(dtype)
    ho, wo = (9 - kh) // sh + 1, (8 - kw) // sw + 1
    a = _pykernels.im2col(xpad, kh, kw, sh, sw, ho, wo)
    b = ck.im2col(xpad, kh, kw, sh, sw, ho, wo)
    np.testing.assert_array_equal(a, b)
    cols = rng.standard_normal(a.shape).astype(dtype)
    np.testing.assert_allclose(
        _pykernels.col2im(cols, 3, 9, 8, kh, kw, sh, sw, ho, wo),
        ck.col2im(cols, 3, 9, 8, kh, kw, sh, sw, ho, wo), atol=tol,
    )


@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-4), (np.float64, 1e-11)])
@pytest.mark.parametrize("sh,sw", [(1, 1), (2, 2), (1, 2)])
def test_depthwise_parity(ck, rng, dtype, tol, sh, sw):
    xpad = rng.standard_normal((3, 4, 10, 9)).astype(dtype)
    w = rng.standard_normal((4, 3, 3)).astype(dtype)
    ho, wo = (10 - 3) // sh + 1, (9 - 3) // sw + 1
    ya = _pykernels.depthwise_forward(xpad, w, sh, sw, ho, wo)
    yb = ck.depthwise_forward(xpad, w, sh, sw, ho, wo)
    np.testing.assert_allclose(ya, yb, atol=tol)
    g = rng.standard_normal(ya.shape).astype(dtype)
    (gxa, gwa), (gxb, gwb) = (_pykernels.depthwise_backward(xpad, w, g, sh, sw),
                              ck.depthwise_backward(xpad, w, g, sh, sw))
    np.testing.assert_allclose(gxa, gxb, atol=tol)
    np.testing.assert_allclose(gwa, gwb, atol=tol * 10)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_maxpool_parity(ck, rng, dtype):
    x = rng.standard_normal((2, 3, 11, 10)).astype(dtype)
    x[0, 0, :3, :3] = 1.0  # ties
    ho, wo = (11 + 2 - 3) // 2 + 1, (10 + 2 - 3) // 2 + 1
    ya, aa = _pykernels.maxpool_forward(x, 3, 3, 2, 2, 1, 1, ho, wo)
    yb, ab = ck.maxpool_forward(x, 3, 3, 2, 2, 1, 1, ho, wo)
    np.testing.assert_array_equal(ya, yb)
    np.testing.assert_array_equal(aa, ab)
    g = rng.standard_normal(ya.shape).astype(dtype)
    np.testing.assert_allclose(_pykernels.maxpool_backward(g, aa, 11, 10), ck.maxpool_backward(g, ab, 11, 10),
                               atol=1e-6)


def test_switching_backends_gives_same_network_output(rng):
    from ndnet.model import build_segmenter, resolve_arch

    graph = build_segmenter(resolve_arch("toy"), seed=3)
    x = rng.standard_normal((2, 3, 64, 64)).astype(np.float32)
    before = _backend.BACKEND
    try:
        outs = {}
        for name in BACKENDS:
            _backend.use(name)
            outs[name] = graph.forward(x, "eval")
    finally:
        _backend.use(before)
    np.testing.assert_allclose(outs["cython"], outs["python"], atol=1e-4)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        _backend.load("fortran")
