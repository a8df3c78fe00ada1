"""Arithmetic check of the VGG16 cut-model parameter totals.

Sums (kh*kw*C_in + 1)*C_out for every conv and (D + 1)*U for every dense
layer, independently of the library code.
"""

BLOCKS = [(64, 64), (128, 128), (256, 256, 256), (512, 512, 512), (512, 512, 512)]
EXPECTED = {5: 17_926_209, 4: 8_161_089, 3: 1_867_329, 2: 293_313, 1: 47_105}


def conv(cin, cout, k=3):
    return (k * k * cin + 1) * cout


def dense(d, u):
    return (d + 1) * u


def base(k):
    total, cin = 0, 3
    for widths in BLOCKS[:k]:
        for w in widths:
            total += conv(cin, w)
            cin = w
    return total, cin


if __name__ == "__main__":
    for k in range(1, 6):
        sub, c = base(k)
        if k == 5:
            flat = (224 // 2**5) ** 2 * c
            total = sub + dense(flat, 128) + dense(128, 1)
        else:
            total = sub + conv(c, c, 1) + dense(c, c) + dense(c, 1)
        status = "ok" if total == EXPECTED[k] else "MISMATCH"
        print(f"k={k} base={sub:>10,} total={total:>11,} expected={EXPECTED[k]:>11,} {status}")
