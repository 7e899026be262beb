// benchmarks only
