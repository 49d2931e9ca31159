"""Versioned, checksummed model files and forecasting from them"""
from __future__ import annotations

from hashlib import sha256
from pathlib import Path
from typing import Any, Dict, Optional, Union
import json
import logging
import os
import tempfile

import pandas as pd
from pydantic import ValidationError

from . import DataValidationError, ModelFileError
from .data import encode_cases
from .forecaster import FORMAT_VERSION, FittedForecaster
from .schemas import ForecasterPayload, ModelFile

log = logging.getLogger("kpclr.pipeline.persistence")

MODEL_FORMAT = 'kpclr-model'
SUPPORTED_VERSIONS = (1,)


def payload_checksum(payload: Dict[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'), allow_nan=False)
    return sha256(canonical.encode('utf-8')).hexdigest()


def write_atomically(path: Union[str, Path], text: str) -> None:
    """Write through a temporary file in the same directory, then rename over ``path``"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix='.tmp')
    try:
        with os.fdopen(fd, 'w') as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def save_model(forecaster: FittedForecaster, path: Union[str, Path]) -> None:
    if forecaster.standardization is None:
        raise DataValidationError("Only forecasters with standardization parameters can be saved")
    payload = forecaster.to_payload().model_dump(mode='json')
    try:
        checksum = payload_checksum(payload)
    except ValueError as e:
        raise DataValidationError(f"Model contains non-finite values: {e}")
    record = ModelFile(format=MODEL_FORMAT, version=FORMAT_VERSION, checksum=checksum, payload=payload)
    write_atomically(path, record.model_dump_json(indent=1))
    log.info("Saved %s model of rank %d to %s", forecaster.kernel.label, forecaster.rank, path)


def load_model(path: Union[str, Path]) -> FittedForecaster:
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelFileError(f"{path} is not a readable model file: {e}")
    try:
        record = ModelFile.model_validate(raw)
    except ValidationError as e:
        raise ModelFileError(f"{path} is not a model file: {e}")
    if record.version not in SUPPORTED_VERSIONS:
        raise ModelFileError(
            f"{path} has model format version {record.version}; supported: {SUPPORTED_VERSIONS}")
    if payload_checksum(record.payload) != record.checksum:
        raise ModelFileError(f"Checksum mismatch in {path}: the file is corrupt or was edited")
    try:
        payload = ForecasterPayload.model_validate(record.payload)
        return FittedForecaster.from_payload(payload, version=record.version)
    except (ValidationError, DataValidationError) as e:
        raise ModelFileError(f"Inconsistent model in {path}: {e}")


def forecast_new_cases(
        model: Union[str, Path, FittedForecaster], cases_csv: Union[str, Path],
        id_column: Optional[str] = None) -> pd.DataFrame:
    """Score every case of a CSV with a saved model.

    Returns a frame of (case_id, probability, forecast) for a logistic model,
    (case_id, fitted) for a regression model. Case ids come from
    ``id_column`` when given, else the row number.
    """
    forecaster = model if isinstance(model, FittedForecaster) else load_model(model)
    frame = pd.read_csv(cases_csv, float_precision='round_trip')
    if id_column is not None and id_column not in frame.columns:
        raise DataValidationError(f"Id column {id_column} missing from {cases_csv}")
    case_ids = frame[id_column] if id_column else pd.Series(range(len(frame)))
    values, forecasts = forecaster.predict(
        encode_cases(frame, forecaster.feature_names, forecaster.standardization.reference_levels))
    if forecasts is None:
        return pd.DataFrame(dict(case_id=case_ids.to_numpy(), fitted=values))
    labels = pd.Series(forecasts, dtype='int64')
    return pd.DataFrame(dict(case_id=case_ids.to_numpy(), probability=values, forecast=labels.to_numpy()))
