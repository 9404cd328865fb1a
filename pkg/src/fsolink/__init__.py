"""Monte Carlo simulator for ground-to-satellite optical links received by an
avalanche-photodiode array: channel model, photo-current signal model, data
detection (ideal ML, EGC, MRC, blind GLRT), beam-spot tracking, and a sweep
harness with a CLI."""

__version__ = "0.1.0"
