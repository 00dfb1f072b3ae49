import logging

import dataiku
from dataiku.customrecipe import get_output_names_for_role, get_recipe_config

from cmab.folder import get_output_dir, upload_folder
from cmab.harness import grid_search, horizon_sweep, run_experiment
from cmab.params import get_recipe_config as get_params
from cmab.save import emit_grid_search, emit_results, emit_sweep

results_folder_name = get_output_names_for_role("results_folder")[0]
results_folder = dataiku.Folder(results_folder_name)
recipe_config = get_recipe_config()

params = get_params(recipe_config)
logging.info("Generated params: %r", params)

if recipe_config.get("clear_folder", True):
    logging.info("Clearing results folder: %r", results_folder.name)
    results_folder.clear()

out_dir, temp_dir = get_output_dir(results_folder)
experiment = params.experiment

if params.mode == "grid_search":
    report = grid_search(experiment, params.multipliers)
    emit_grid_search(report, out_dir, experiment)
elif params.mode == "sweep":
    report = horizon_sweep(experiment, params.horizons)
    emit_sweep(report, out_dir, experiment)
else:
    results = run_experiment(experiment)
    emit_results(results, out_dir, experiment)

# Remote folders get the files written to the local temp dir
if temp_dir is not None:
    upload_folder(out_dir, results_folder)
    temp_dir.cleanup()
