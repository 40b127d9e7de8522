"""
Explaining a model that lives in another process
================================================

The engine never needs to import the model it explains. This script
spawns a copy of itself as a peer speaking newline-delimited JSON over
stdin/stdout, then recovers the peer's coefficients from the outside.

Run it with no arguments; the "serve" argument is what the child sees.
"""

import json
import sys

# ---- peer half: a linear model y = 1 + 2a - 3b behind the wire protocol
if len(sys.argv) > 1 and sys.argv[1] == "serve":
    out = sys.stdout
    out.write(json.dumps({"melime_bridge": 1, "task": "regression", "n_features": 2}) + "\n")
    out.flush()
    for line in sys.stdin:
        try:
            req = json.loads(line)
            rows = [[1.0 + 2.0 * a - 3.0 * b] for a, b in req["x"]]
            out.write(json.dumps({"id": req["id"], "y": rows}) + "\n")
        except Exception as exc:
            out.write(json.dumps({"id": None, "error": str(exc)}) + "\n")
        out.flush()
    sys.exit(0)

# ---- client half
import numpy as np

from melime.blackbox import bridge_connect, bridge_regression_fn
from melime.core import Dataset, Instance
from melime.engine import EngineConfig, explain
from melime.generators import KdeGenerator
from melime.local_models import LinearFamily

client = bridge_connect(command=[sys.executable, __file__, "serve"])
print("handshake: task =", client.task, " n_features =", client.n_features)

rng = np.random.default_rng(0)
train = Dataset(rng.uniform(-2.0, 2.0, (400, 2)), ("a", "b"))
x_star = Instance((0.5, -0.5), ("a", "b"))

try:
    result = explain(
        bridge_regression_fn(client),
        x_star,
        KdeGenerator(train),
        LinearFamily(),
        EngineConfig(r=1.0, b=200, seed=0),
    )
finally:
    client.close()

print("true coefficients:      a = +2.000  b = -3.000")
print("recovered coefficients: a = %+0.3f  b = %+0.3f"
      % tuple(result.importances.alpha))
print("converged:", result.converged, " batches:", len(result.convergence_trace))
