# %% [markdown]
# # Scenario runner
#
# Every experiment is a named scenario with a JSON config and a JSON report.
# The same runs are available from the shell as `twistorlab run <id>` and
# `twistorlab suite`.

# %%
from twistorlab.scenarios import REGISTRY, ScenarioConfig, run_scenario

for sid, spec in REGISTRY.items():
    print(f"{sid:24s} {spec.description}")

# %%
rep = run_scenario(ScenarioConfig("moebius-rigidity", out="twistorlab-out/nb07",
                                  params={"draws": 200}))
print(rep.to_json()[:600])
