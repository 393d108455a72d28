import unittest
import testutils
import test_dataset
import test_synthetic
import test_encoder
import test_info_estimators
import test_losses
import test_trainer
import test_evaluation
import test_cli
import test_acceptance

MODULES = (test_dataset, test_synthetic, test_encoder, test_info_estimators,
           test_losses, test_trainer, test_evaluation, test_cli,
           test_acceptance)

suites = []
for module in MODULES:
    suites += module.getsuites()
runner = unittest.TextTestRunner()
runner.run(unittest.TestSuite(suites))
