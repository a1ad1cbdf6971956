"""Reference-count-free views of the arrays a kernel works on.

A compiled function that receives a tuple of arrays and is not inlined
increments and decrements every member's reference count on each call.
For a 35-array state tuple that bookkeeping dominates the per-event cost.
Views without a meminfo make those operations no-ops. The caller must keep
the original arrays alive for as long as the views are in use, which the
run loop does by holding the Python-side tuples.
"""

from numba import types
from numba.core import cgutils
from numba.extending import intrinsic


def _borrow_array(context, builder, aryty, value):
    src = context.make_array(aryty)(context, builder, value=value)
    dst = context.make_array(aryty)(context, builder)
    context.populate_array(
        dst,
        data=src.data,
        shape=src.shape,
        strides=src.strides,
        itemsize=src.itemsize,
        meminfo=None,
        parent=None,
    )
    return dst._getvalue()


@intrinsic
def borrow(typingctx, tup):
    """Same tuple of arrays, with every member detached from its meminfo."""
    if not isinstance(tup, types.BaseTuple) or not all(isinstance(t, types.Array) for t in tup.types):
        return None

    def codegen(context, builder, signature, args):
        out = cgutils.get_null_value(context.get_value_type(tup))
        for i, aryty in enumerate(tup.types):
            member = builder.extract_value(args[0], i)
            out = builder.insert_value(out, _borrow_array(context, builder, aryty, member), i)
        return out

    return tup(tup), codegen
