"""
Pasting objects between frames
==============================

Objects are cropped from labeled scenes (ground truth database) and from
confident pseudo labels (pseudo database, score >= 0.8). They are pasted
into other frames as long as they do not touch an existing box. Which
database may feed which kind of frame is a policy choice.
"""
import numpy as np

from lidarssl.geometry import Provenance
from lidarssl.sampling import ABLATION_DIRECTIONS, PastePolicy, build_database, semi_sample
from lidarssl.synthetic import SyntheticWorldSpec, generate_scene

labeled = [generate_scene(SyntheticWorldSpec(seed=s), f"lab{s}").replace(provenance=Provenance.LABELED)
           for s in range(3)]
pseudo = []
for s in range(3, 6):
    sc = generate_scene(SyntheticWorldSpec(seed=s), f"pl{s}")
    pseudo.append(sc.replace(boxes=tuple(b.replace(score=0.9) for b in sc.boxes),
                             provenance=Provenance.PSEUDO_LABELED))

gt_db = build_database(labeled, "gt")
ps_db = build_database(pseudo, "pseudo", 0.8)
print(f"gt database: {len(gt_db)} samples, pseudo database: {len(ps_db)} samples")

target = generate_scene(SyntheticWorldSpec(seed=10), "t").replace(boxes=(), provenance=Provenance.UNLABELED)
for row in "aef":
    dirs = ABLATION_DIRECTIONS[row]
    out = semi_sample(target, [gt_db, ps_db], PastePolicy(directions=dirs), np.random.default_rng(0))
    tags = [b.tag for b in out.boxes if b.tag]
    print(f"row ({row}) {sorted(d.value for d in dirs)}")
    print(f"    unlabeled frame gets {tags.count('pasted:gt')} gt and {tags.count('pasted:pseudo')} pseudo objects")
