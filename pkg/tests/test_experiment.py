#!/usr/bin/env python
"""Tests for the repeated-split protocol and its report."""
import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from cloudseg.core.errors import ConfigError, UsageError
from cloudseg.core.dataset import SplitSpec
from cloudseg.core.experiment import (
    ExperimentReport, RunManifest, RunResult, evaluate_checkpoint, oracle_labels, run_experiment, run_once,
)
from cloudseg.core.metrics import LabelErrors, Thresholds
from cloudseg.core.output_writer import render_markdown, report_frame, write_output, write_report
from cloudseg.core.synth import synth_fixture
from cloudseg.core.trainer import TrainConfig
from cloudseg.core.unet import UNetConfig


def _result(index, errors):
    return RunResult(index=index, seed=index, split=SplitSpec(("a",), ("b",), index), errors=errors,
                     per_image=errors)


class RunManifestTests(unittest.TestCase):

    def test_validate(self):
        for kwargs in ({"runs": 0, "synthetic": 4}, {}, {"synthetic": 4, "manifest_path": "m.tsv"},
                       {"synthetic": 1}):
            with self.assertRaises(ConfigError):
                RunManifest(**kwargs).validate()

    def test_run_seed(self):
        self.assertEqual([RunManifest(seed=7).run_seed(i) for i in range(3)], [7, 8, 9])


class ExperimentTests(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.samples = synth_fixture(5, seed=0, size=32)

    def test_oracle_runs_are_perfect_and_ordered(self):
        manifest = RunManifest(synthetic=5, runs=4, seed=3, oracle=True, workers=2)
        report = run_experiment(self.samples, manifest)
        self.assertEqual([r.index for r in report.runs], [0, 1, 2, 3])
        self.assertEqual([r.seed for r in report.runs], [3, 4, 5, 6])
        self.assertEqual(report.mean, LabelErrors(0.0, 0.0, 0.0))

    def test_oracle_ignores_thresholds(self):
        # 0.5 encodes thin; with t1 above it a thresholded target would be read as sky
        th = Thresholds(0.55, 0.7)
        manifest = RunManifest(synthetic=5, runs=2, oracle=True, thresholds=th)
        report = run_experiment(self.samples, manifest)
        self.assertEqual(report.mean, LabelErrors(0.0, 0.0, 0.0))
        pooled, per_image = evaluate_checkpoint(None, self.samples, th, oracle=True)
        self.assertEqual(pooled, LabelErrors(0.0, 0.0, 0.0))
        self.assertEqual(per_image, LabelErrors(0.0, 0.0, 0.0))

    def test_oracle_labels_decode_targets(self):
        labels = oracle_labels(self.samples)
        for s, lab in zip(self.samples, labels):
            np.testing.assert_array_equal(lab.labels, s.gt.labels)

    def test_split_follows_run_seed(self):
        manifest = RunManifest(synthetic=5, runs=2, seed=11, oracle=True)
        a = run_once(self.samples, manifest, 1)
        b = run_once(self.samples, RunManifest(synthetic=5, runs=1, seed=12, oracle=True), 0)
        self.assertEqual(a.split, b.split)
        self.assertEqual(len(a.split.train_ids), 4)

    def test_trained_run_reports_loss(self):
        manifest = RunManifest(synthetic=5, runs=1, train=TrainConfig(epochs=1, batch_size=2),
                               net=UNetConfig(depth=1, base_channels=2, resolution=32))
        result = run_once(self.samples, manifest, 0)
        self.assertIsNotNone(result.final_loss)
        for v in result.errors.as_tuple():
            self.assertTrue(v is None or 0.0 <= v <= 100.0)


class ReportTests(unittest.TestCase):

    def setUp(self):
        runs = [_result(0, LabelErrors(10.0, 2.0, None)), _result(1, LabelErrors(20.0, 4.0, None))]
        self.report = ExperimentReport(runs=runs, mean=LabelErrors(15.0, 3.0, None),
                                       mean_per_image=LabelErrors(15.0, 3.0, None))

    def test_frame_rows(self):
        df = report_frame(self.report)
        self.assertEqual(df['run'].tolist(), [0, 1, 'mean'])
        self.assertIsNone(df['seed'].iloc[2])
        self.assertIsNone(df['thick_pct'].iloc[0])
        self.assertEqual(df['sky_pct'].tolist(), [10.0, 20.0, 15.0])

    def test_markdown(self):
        md = render_markdown(self.report)
        self.assertIn("| U-Net, this run (mean of 2 runs) | 15.0 | 3.0 | n/a |", md)
        self.assertIn("| Published: U-Net (reference, not computed) | 7.3 | 4.4 | 4.4 |", md)
        self.assertLess(md.index("this run"), md.index("reference, not computed"))

    def test_write_report(self):
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_report(self.report, tmp, extra_formats=['json'])
            self.assertEqual(sorted(p.name for p in paths), ['report.csv', 'report.json', 'report.md'])
            with open(os.path.join(tmp, 'report.csv'), encoding='utf-8') as f:
                self.assertEqual(f.read().splitlines()[-1], "mean,,15.0,3.0,")
            self.assertEqual(len(pd.read_json(os.path.join(tmp, 'report.json'))), 3)

    def test_unsupported_format(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(UsageError):
                write_output(report_frame(self.report), os.path.join(tmp, 'report.parquet'), 'parquet')


if __name__ == '__main__':
    unittest.main()
