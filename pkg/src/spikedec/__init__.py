"""spikedec: hybrid convolutional/recurrent velocity decoder for binned spikes.

Library layout:

- :mod:`spikedec.numerics` -- tensor primitives, deterministic RNG, grad checks
- :mod:`spikedec.cells`    -- GRU, recurrent LIF, and spiking-GRU units
- :mod:`spikedec.layers`   -- 1-D conv, max pooling, linear, keypoint upsampling
- :mod:`spikedec.model`    -- decoder assembly, presets, checkpoints
- :mod:`spikedec.data`     -- recordings, synthetic generator, splits
- :mod:`spikedec.train`    -- loss, Adam, BPTT, the fit loop
- :mod:`spikedec.bench`    -- accuracy and resource metrics
- :mod:`spikedec.stream`   -- incremental low-latency inference
- :mod:`spikedec.cli`      -- command-line entry point
"""

__version__ = "0.1.0"
