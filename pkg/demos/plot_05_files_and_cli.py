"""
Files and the command line
==========================

Embeddings travel as CSV, NPY or a small binary format (a 24-byte header,
little-endian float32 rows, optional ids). The command-line tool reads any
of them and writes one JSON document per run.
"""

import json
import tempfile
from contextlib import redirect_stdout
from io import StringIO
from pathlib import Path

import numpy as np

from concept_retrieval import load_embeddings
from concept_retrieval.cli import main

work = Path(tempfile.mkdtemp())
data, truth = work / "planted.cret", work / "truth.json"
main(["synth", "--output", str(data), "--truth", str(truth), "--n", "1500", "--d", "32", "--g", "6",
      "--concepts-per-image", "1", "2", "--noise-sigma", "0.1", "--seed", "3"])
print(f"{data.name}: {data.stat().st_size} bytes")

# round trip through CSV
main(["convert", "--input", str(data), "--output", str(work / "planted.csv")])
main(["convert", "--input", str(work / "planted.csv"), "--output", str(work / "back.cret")])
a, b = load_embeddings(data), load_embeddings(work / "back.cret")
print(f"CSV round trip max difference {np.abs(a.vectors - b.vectors).max():.1e}")

#########################################################################
# ``extract`` prints the result document; the exit code is 2 when no
# concept was found.

out = StringIO()
with redirect_stdout(out):
    code = main(["extract", "--embeddings", str(data), "--query", "0", "--concepts", "2", "--seed", "7"])
doc = json.loads(out.getvalue())
print(f"exit {code}, termination {doc['termination']}")
for c in doc["concepts"]:
    top = ", ".join(r["id"] for r in c["retrieved"][:5])
    print(f"  concept {c['ordinal']}: surrogate {c['surrogate_id']}, k={c['k']}, top ids {top}")

out = StringIO()
with redirect_stdout(out):
    main(["bench", "--embeddings", str(data), "--truth", str(truth), "--num-queries", "5",
          "--min-planted", "2", "--concepts", "2"])
bench = json.loads(out.getvalue())
print(f"bench: mean purity {bench['mean_purity']:.2f}, mean coverage {bench['mean_coverage']:.2f}")
