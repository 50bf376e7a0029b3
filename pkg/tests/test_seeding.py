from losc.seeding import MASK64, episode_seed, episode_seeds, splitmix64


def test_splitmix_reference_values():
    # first outputs of the reference splitmix64 generator seeded with 0
    x, outs = 0, []
    for _ in range(3):
        outs.append(splitmix64(x))
        x = (x + 0x9E3779B97F4A7C15) & MASK64
    assert outs == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_episode_seed_addressable():
    seeds = episode_seeds(7, 10)
    assert seeds[4] == episode_seed(7, 4)
    assert episode_seeds(7, 3, offset=4) == seeds[4:7]
    assert len(set(seeds)) == 10
    assert episode_seeds(8, 10) != seeds
