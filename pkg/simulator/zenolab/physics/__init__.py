# Numerical core: auxiliary algebra, direct-integral states, histories, Zeno sweeps
