import sys

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def vote_csv(tmp_path):
    """Write a vote CSV from ``{sample_id: [labels...]}`` and return its path."""

    def make(samples, name="votes.csv"):
        path = tmp_path / name
        lines = ["sample_id,teacher_id,class"]
        for sid, labels in samples.items():
            lines += [f"{sid},t{j},{c}" for j, c in enumerate(labels)]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return make
