"""Walk through the DotVByte byte layout of one small document and score it."""

import numpy as np

from fwdindex import SparseVector, ValueFormat, to_gaps
from fwdindex.dotvbyte import DVB_LENGTHS, dvb_decode_doc, dvb_dot, dvb_encode_doc

doc = SparseVector([3, 4, 10, 300, 301, 302, 1500, 1501, 1502, 40000, 40001],
                   np.linspace(0.5, 1.5, 11, dtype=np.float32))
gaps = to_gaps(doc.components)
enc = dvb_encode_doc(gaps)

print("components:", doc.components.tolist())
print("gaps:      ", gaps.tolist())
for g, c in enumerate(enc.controls):
    bits = format(c, "08b")[::-1]
    print(f"group {g}: control 0b{format(c, '08b')} -> widths {[1 + int(b) for b in bits]}, "
          f"{DVB_LENGTHS[c]} data bytes")
print("data bytes:", enc.data.hex(" "))
print("raw u16 tail:", enc.tail.tolist())
print(f"{enc.nbytes} bytes for {doc.nnz} components = {8 * enc.nbytes / doc.nnz:.2f} bits each "
      f"(16.00 uncompressed)")

assert np.array_equal(dvb_decode_doc(enc, path="vector"), doc.components)
assert np.array_equal(dvb_decode_doc(enc, path="scalar"), doc.components)

q = np.zeros(50_000, np.float32)
q[[4, 301, 1502, 40001]] = [2.0, 1.0, 0.5, 3.0]
fused = dvb_dot(enc, doc.values, ValueFormat.f32(), q)
exact = float(np.dot(doc.values.astype(np.float64), q[doc.components]))
print(f"fused dot {fused:.6f}, exact {exact:.6f}")
