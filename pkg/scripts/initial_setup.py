#!/usr/bin/env python3
"""
Write or update the config.ini read by the kpclr command.
"""

import argparse
from configparser import ConfigParser
from os.path import exists

CONFIG_FILE = "config.ini"
SECTIONS = ("defaults", "test")
DEFAULTS = dict(
    seed="0", costs="2:1", ratio_tolerance="0.25", error_slack="0.05", n_jobs="1",
    log_level="INFO", output="out")


if __name__ == "__main__":
    ini_file = ConfigParser()
    if exists(CONFIG_FILE):
        with open(CONFIG_FILE) as f:
            ini_file.read_file(f)
    for section in SECTIONS:
        if not ini_file.has_section(section):
            ini_file.add_section(section)
    current = {k: ini_file.get("defaults", k, fallback=v) for k, v in DEFAULTS.items()}
    argp = argparse.ArgumentParser("Write the default settings of the kpclr command")
    argp.add_argument("--seed", default=current["seed"], help="split and simulation seed")
    argp.add_argument("--costs", default=current["costs"], help="misclassification costs as FP:FN")
    argp.add_argument(
        "--ratio-tolerance", default=current["ratio_tolerance"],
        help="relative tolerance on the validation FN/FP ratio")
    argp.add_argument(
        "--error-slack", default=current["error_slack"],
        help="relative slack over the lowest cost-weighted validation error")
    argp.add_argument("-j", "--n-jobs", default=current["n_jobs"], help="kernels fit concurrently")
    argp.add_argument("--log-level", default=current["log_level"], help="logging level")
    argp.add_argument("-o", "--output", default=current["output"], help="default output directory")
    argp.add_argument(
        "--test-log-level", default=ini_file.get("test", "log_level", fallback="WARNING"),
        help="logging level while running the test suite")
    args = argp.parse_args()
    for key in DEFAULTS:
        ini_file.set("defaults", key, str(getattr(args, key)))
    ini_file.set("test", "log_level", args.test_log_level)
    with open(CONFIG_FILE, "w") as f:
        ini_file.write(f)
