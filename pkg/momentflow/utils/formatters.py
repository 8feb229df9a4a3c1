"""Output formatting utilities for momentflow"""
import csv
import dataclasses
import io
import json
import math
from enum import Enum
from typing import Any, Dict, List, Union

import numpy as np


def json_serial(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    elif isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.floating):
        return float(obj)
    elif isinstance(obj, np.bool_):
        return bool(obj)
    elif isinstance(obj, Enum):
        return obj.value
    elif hasattr(obj, 'to_dict'):
        return obj.to_dict()
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return dataclasses.asdict(obj)
    raise TypeError(f"Type {type(obj)} not serializable")


def _finite_or_none(data: Any) -> Any:
    """JSON has no NaN/inf; map them to null"""
    if isinstance(data, float) and not math.isfinite(data):
        return None
    if isinstance(data, dict):
        return {k: _finite_or_none(v) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [_finite_or_none(v) for v in data]
    return data


def format_output(data: Any, format: str = 'json') -> str:
    if format == 'json':
        return format_json(data)
    elif format in ('jsonl', 'ndjson'):
        return format_jsonl(data)
    elif format == 'pretty':
        return format_pretty(data)
    elif format == 'csv':
        return format_csv(data)
    else:
        raise ValueError(f"Unknown format: {format}")


def format_json(data: Any) -> str:
    data = json.loads(json.dumps(data, default=json_serial))
    return json.dumps(_finite_or_none(data), separators=(',', ':'), allow_nan=False)


def format_jsonl(data: Any) -> str:
    if isinstance(data, list):
        return "\n".join(format_json(item) for item in data)
    return format_json(data)


def format_pretty(data: Any) -> str:
    """Human-readable format for terminal display"""
    if isinstance(data, list):
        if not data:
            return "No results."
        output = []
        for i, item in enumerate(data):
            output.append(f"\n{'='*50}")
            output.append(f"Row {i+1}")
            output.append('='*50)
            output.append(format_item(item))
        return "\n".join(output)
    return format_item(data)


def format_item(item: Union[Dict[str, Any], Any]) -> str:
    """Format a single item for display"""
    if not isinstance(item, dict):
        return str(item)

    lines = []
    for key, value in item.items():
        if isinstance(value, np.ndarray):
            value = value.tolist()
        if isinstance(value, (list, dict)):
            if isinstance(value, list) and len(value) > 10:
                lines.append(f"{key}: [{len(value)} items]")
            else:
                lines.append(f"{key}: {json.dumps(value, indent=2, default=json_serial)}")
        elif isinstance(value, float):
            lines.append(f"{key}: {value:.10g}")
        else:
            lines.append(f"{key}: {value}")
    return "\n".join(lines)


def format_csv(data: Union[List[Dict[str, Any]], Any]) -> str:
    """Format as CSV for data export"""
    if not isinstance(data, list):
        data = [data]

    if not data:
        return ""

    # Flatten nested structures for CSV
    flattened = []
    for item in data:
        if isinstance(item, dict):
            flat_item = {}
            for key, value in item.items():
                if isinstance(value, np.ndarray):
                    value = value.tolist()
                if isinstance(value, (list, dict)):
                    flat_item[key] = json.dumps(value, default=json_serial)
                elif isinstance(value, float):
                    flat_item[key] = repr(value)
                else:
                    flat_item[key] = value
            flattened.append(flat_item)
        else:
            flattened.append({'value': str(item)})

    output = io.StringIO()
    fieldnames = list(flattened[0].keys())
    writer = csv.DictWriter(output, fieldnames=fieldnames, lineterminator='\n')
    writer.writeheader()
    writer.writerows(flattened)
    return output.getvalue()


def format_matrix_csv(matrix: np.ndarray, row_labels=None, col_labels=None) -> str:
    """Dense matrix as CSV, optional header row and label column"""
    matrix = np.asarray(matrix, dtype=float)
    output = io.StringIO()
    writer = csv.writer(output, lineterminator='\n')
    if col_labels is not None:
        writer.writerow(([''] if row_labels is not None else []) + [repr(float(c)) for c in col_labels])
    for i, row in enumerate(matrix):
        cells = [repr(float(v)) for v in row]
        if row_labels is not None:
            cells = [repr(float(row_labels[i]))] + cells
        writer.writerow(cells)
    return output.getvalue()
