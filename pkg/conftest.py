"""Shared fixtures. Log and result directories go to a temp dir for the whole session."""

import csv
import os
import tempfile

_SESSION_DIR = tempfile.mkdtemp(prefix="chm-tests-")
os.environ.setdefault("CHM_LOG_DIR", os.path.join(_SESSION_DIR, "logs"))
os.environ.setdefault("CHM_OUTPUT_DIR", os.path.join(_SESSION_DIR, "results"))

import numpy as np
import pytest

from chm.config import SEVEN_ARM_MEANS
from chm.exp_family import ExpFamilyModel
from chm.oracle import Query
from chm.policy import PolicyConfig, PolicyKind
from chm.state import BanditInstance


def read_rows(path):
    """Rows of a written CSV as dicts of raw strings."""
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


@pytest.fixture
def read_csv():
    return read_rows


@pytest.fixture
def bernoulli():
    return ExpFamilyModel.bernoulli()


@pytest.fixture
def gaussian():
    return ExpFamilyModel.gaussian(variance=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def seven_arm_instance(bernoulli):
    """Seven Bernoulli arms 0.1..0.7; use .with_gamma() to set the query."""
    return BanditInstance(bernoulli, tuple(SEVEN_ARM_MEANS), Query.point(0.45))


@pytest.fixture
def thompson_cfg():
    return PolicyConfig(PolicyKind.THOMPSON_CHM, rejection_cap=1000)
