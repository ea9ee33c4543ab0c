from osp.prng import SplitMix64

# Vectors produced by an independent C implementation of the reference
# algorithm; also recorded in docs/prng.md.
REFERENCE_STREAMS = {
    0: [16294208416658607535, 7960286522194355700, 487617019471545679,
        17909611376780542444, 1961750202426094747],
    1: [10451216379200822465, 13757245211066428519, 17911839290282890590,
        8196980753821780235, 8195237237126968761],
    42: [13679457532755275413, 2949826092126892291, 5139283748462763858,
         6349198060258255764, 701532786141963250],
    1234567: [6457827717110365317, 3203168211198807973, 9817491932198370423,
              4593380528125082431, 16408922859458223821],
    0xDEADBEEFCAFEF00D: [10384543611796878027, 12091642062541636903,
                         1852118247650364724, 16692712714918790034,
                         8315560898597021740],
    2 ** 64 - 1: [16490336266968443936, 16834447057089888969,
                  4048727598324417001, 7862637804313477842,
                  13015481187462834606],
}


def test_reference_vectors():
    for seed, expected in REFERENCE_STREAMS.items():
        rng = SplitMix64(seed)
        assert [rng.next_u64() for _ in range(5)] == expected


def test_determinism_and_independence():
    a, b = SplitMix64(987), SplitMix64(987)
    assert [a.next_u64() for _ in range(100)] == [b.next_u64() for _ in range(100)]
    assert SplitMix64(1).next_u64() != SplitMix64(2).next_u64()


def test_below_range_and_reproducibility():
    rng = SplitMix64(5)
    draws = [rng.below(10) for _ in range(1000)]
    assert all(0 <= d < 10 for d in draws)
    rng2 = SplitMix64(5)
    assert draws == [rng2.below(10) for _ in range(1000)]


def test_below_covers_all_residues():
    rng = SplitMix64(77)
    seen = {rng.below(7) for _ in range(500)}
    assert seen == set(range(7))


def test_unit_interval():
    rng = SplitMix64(11)
    values = [rng.unit() for _ in range(1000)]
    assert all(0.0 <= v < 1.0 for v in values)
    assert abs(sum(values) / len(values) - 0.5) < 0.05
