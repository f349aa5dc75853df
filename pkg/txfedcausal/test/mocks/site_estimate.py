import json


target_estimate = json.loads('''{
  "object": "site_estimate",
  "site_id": "site1",
  "role": "target",
  "mu0": 210.4,
  "mu1": 210.1,
  "n_k": 4,
  "n_T": 4,
  "xi_own": [[0.5, -0.5, 1.0, -1.0], [0.25, -0.25, 0.75, -0.75]],
  "xi_on_target": [],
  "tau": null,
  "diagnostics": {"clipped": 0}
}''')

row_level_estimate = json.loads('''{
  "object": "site_estimate",
  "site_id": "site2",
  "role": "source",
  "mu0": 210.4,
  "mu1": 210.1,
  "n_k": 2,
  "n_T": 4,
  "xi_own": [[0.5, -0.5], [0.25, -0.25]],
  "rows": [{"y": 211.0, "a": 1}, {"y": 209.5, "a": 0}]
}''')
