"""Numba plumbing shared by the codec kernels.

Kernels index with unsigned integers on purpose: numba emits a negative-index
wraparound branch for every signed subscript, which costs more than the
decoding itself in the tight scan loops.
"""

import sys

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.extending import intrinsic, overload

jit = njit(cache=True, nogil=True)
#: for tiny helpers that must be inlined at the numba IR level
jit_inline = njit(cache=True, nogil=True, inline="always")

u64 = np.uint64
U0 = np.uint64(0)
U1 = np.uint64(1)
U2 = np.uint64(2)
U8 = np.uint64(8)

if sys.byteorder != "little":  # pragma: no cover
    raise ImportError("fwdindex kernels assume a little-endian host")


@intrinsic
def load_u16(typingctx, arr, idx):
    """Little-endian uint16 at byte ``idx`` of a uint8 array, no alignment needed.

    The caller guarantees ``idx + 1`` is in bounds (blobs carry zero padding).
    """
    if not (isinstance(arr, types.Array) and arr.dtype == types.uint8 and isinstance(idx, types.Integer)):
        return None
    sig = types.uint64(arr, idx)

    def codegen(context, builder, signature, args):
        ary = context.make_array(signature.args[0])(context, builder, args[0])
        ptr = builder.gep(ary.data, [args[1]])
        word = builder.load(builder.bitcast(ptr, ir.IntType(16).as_pointer()), align=1)
        return builder.zext(word, ir.IntType(64))

    return sig, codegen


@intrinsic
def load_be64(typingctx, arr, idx):
    """Big-endian uint64 at byte ``idx`` of a uint8 array (a 64-bit bit window)."""
    if not (isinstance(arr, types.Array) and arr.dtype == types.uint8 and isinstance(idx, types.Integer)):
        return None
    sig = types.uint64(arr, idx)

    def codegen(context, builder, signature, args):
        ary = context.make_array(signature.args[0])(context, builder, args[0])
        ptr = builder.gep(ary.data, [args[1]])
        word = builder.load(builder.bitcast(ptr, ir.IntType(64).as_pointer()), align=1)
        return builder.bswap(word)

    return sig, codegen


@intrinsic
def clz64(typingctx, x):
    """Leading zero count of a uint64; 64 for zero."""
    if x != types.uint64:
        return None
    sig = types.uint64(x)

    def codegen(context, builder, signature, args):
        return builder.ctlz(args[0], ir.Constant(ir.IntType(1), 0))

    return sig, codegen


def load_value(vals, lut, i):  # pragma: no cover - replaced by the overload
    raise NotImplementedError


@overload(load_value, inline="always")
def _load_value(vals, lut, i):
    if isinstance(vals.dtype, types.Float):
        return lambda vals, lut, i: np.float32(vals[i])
    return lambda vals, lut, i: lut[vals[i]]


@jit
def hsum8(lanes):
    """Horizontal sum of 8 float32 lanes as a balanced tree."""
    return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + (
        (lanes[4] + lanes[5]) + (lanes[6] + lanes[7])
    )


def hsum8_py(lanes) -> np.float32:
    """Same reduction order as :func:`hsum8`, in numpy float32."""
    f = np.float32
    l = [f(x) for x in lanes]
    return f(f(f(l[0] + l[1]) + f(l[2] + l[3])) + f(f(l[4] + l[5]) + f(l[6] + l[7])))
