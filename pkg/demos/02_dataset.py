"""Generate the desk-scale training dataset and look at what is in it.

Writes dataset.csv + dataset.meta.json into demos/ and prints the
summary statistics table. Takes a second or two.
"""

import os

from sandlab import GenConfig, dataset_stats, generate_dataset, save_dataset

OUT = os.path.dirname(os.path.abspath(__file__))

config = GenConfig.desk_scale(master_seed=11)
print("conditions: p grid", config.p_grid, "kPa  x  e grid", config.e_grid)
print(
    f"{config.tests_per_condition} random strain paths per condition, "
    f"up to {config.max_steps} steps each"
)

ds = generate_dataset(config)
print(f"\n{ds.features.shape[0]} samples ({ds.n_failed_paths} failed paths)")
print(f"content digest {ds.digest()[:16]}")

print(f"\n{'quantity':<12} {'mean':>12} {'min':>12} {'max':>12} {'sd':>12}")
for row in dataset_stats(ds):
    print(
        f"{row.name:<12} {row.mean:>12.5g} {row.min:>12.5g} "
        f"{row.max:>12.5g} {row.sd:>12.5g}"
    )

csv_path = os.path.join(OUT, "dataset.csv")
save_dataset(ds, csv_path, os.path.join(OUT, "dataset.meta.json"))
print(f"\nwrote {csv_path}")
print("rerunning this script reproduces the file byte for byte")
