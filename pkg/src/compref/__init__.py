"""Plan-guided controller synthesis for monotone systems via per-subsystem abstractions and adaptive partitions."""
