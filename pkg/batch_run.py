#!/usr/bin/env python
# -*- coding: utf-8 -*-

import argparse
import logging
import os
from datetime import datetime

import pandas as pd

from src import load_config, setup_logging
from src.commands import verify_problem
from src.errors import SturmflowError
from src.problem_io import load_problem

# 配置文件路径
CONFIG_PATH = "./config.yaml"
# 问题配置目录
PROBLEMS_DIR = "./problems"
# 汇总表路径
SUMMARY_FILE = "./outputs/batch_summary.xlsx"


def get_problem_list(problems_dir):
    """Collect the problem configs (*.json) of a folder, sorted by name."""
    if not os.path.isdir(problems_dir):
        logging.error(f"Problem directory {problems_dir} does not exist")
        return []
    files = sorted(os.path.join(problems_dir, f) for f in os.listdir(problems_dir) if f.endswith('.json'))
    logging.info(f"Found {len(files)} problem config(s) in {problems_dir}")
    return files


def run_one(path, settings):
    """Verify one problem config and flatten the report into a summary row."""
    row = {'problem': os.path.basename(path)}
    try:
        report = verify_problem(load_problem(path), settings)
    except SturmflowError as e:
        logging.error(f"Verification of {path} failed: {e}")
        row['error'] = str(e)
        return row
    row.update(report.model_dump(by_alias=True, exclude={'conjugate_points'}))
    row['conjugate_points'] = len(report.conjugate_points)
    return row


def main(problems_dir=PROBLEMS_DIR, summary_file=SUMMARY_FILE, config_path=CONFIG_PATH):
    start_time = datetime.now()
    settings = load_config(config_path)
    setup_logging(settings)

    problems = get_problem_list(problems_dir)
    if not problems:
        logging.error("No problem configs to run, exiting")
        return None

    rows = []
    for i, path in enumerate(problems, 1):
        logging.info(f"Processing {i}/{len(problems)}: {path}")
        rows.append(run_one(path, settings))

    os.makedirs(os.path.dirname(os.path.abspath(summary_file)), exist_ok=True)
    df = pd.DataFrame(rows)
    with pd.ExcelWriter(summary_file, engine='openpyxl', mode='w') as writer:
        df.to_excel(writer, sheet_name='summary', index=False)

    agreed = int(df['agree'].fillna(False).astype(bool).sum()) if 'agree' in df else 0
    duration = (datetime.now() - start_time).total_seconds()
    logging.info(f"Batch finished, agreement on {agreed}/{len(rows)} problem(s)")
    logging.info(f"Total time: {duration:.2f}s, summary written to {summary_file}")
    return summary_file


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Verify every problem config in a folder.")
    parser.add_argument('--problems', default=PROBLEMS_DIR)
    parser.add_argument('--summary', default=SUMMARY_FILE)
    parser.add_argument('--config', default=CONFIG_PATH)
    args = parser.parse_args()
    main(args.problems, args.summary, args.config)
