"""
Módulo para escribir y leer archivos de eventos.

El archivo de eventos es el contrato entre la etapa de simulación y la de
correlación: texto separado por espacios, un evento por fila, con la cabecera
`# shot x[m] y[m] t[s]`. Tras la cabecera pueden aparecer líneas de metadatos
`# clave=valor` (disparos vacíos, etiqueta de la fuente).
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from hbtlab.core.model import EventFileError, Shot, Statistics

logger = logging.getLogger(__name__)

# Nombre en cabecera -> nombre de columna interno
HEADER_COLUMNS: Dict[str, str] = {"shot": "shot", "x[m]": "x", "y[m]": "y", "t[s]": "t"}
HEADER = "# shot x[m] y[m] t[s]"
FLOAT_FORMAT = "%.17g"

_EXTRA_FIELD = "_extra"


def _parse_float(value) -> float:
    # float() de Python es exacto para 17 cifras; lo no numérico queda como NaN
    try:
        return float(value)
    except (TypeError, ValueError):
        return float("nan")


def write_events(shots: Sequence[Shot], path: Union[str, Path]) -> None:
    """
    Escribe los disparos en el formato de archivo de eventos.

    Los reales se escriben con 17 cifras significativas, de modo que la
    lectura posterior reproduce exactamente los valores en coma flotante.
    Los identificadores de disparos vacíos se guardan como metadatos para
    que sobrevivan al viaje de ida y vuelta.
    """
    path = Path(path)
    frames = [
        pd.DataFrame(
            {
                "shot": np.full(len(shot), shot.shot_id, dtype=np.int64),
                "x": shot.x,
                "y": shot.y,
                "t": shot.t,
            }
        )
        for shot in shots
        if len(shot) > 0
    ]
    metadata: List[str] = []
    empty_ids = [str(shot.shot_id) for shot in shots if len(shot) == 0]
    if empty_ids:
        metadata.append(f"empty_shots={','.join(empty_ids)}")
    tags = {shot.source_tag.value for shot in shots}
    if len(tags) == 1:
        metadata.append(f"source={tags.pop()}")
    elif len(tags) > 1:
        logger.warning(f"Disparos con etiquetas mezcladas {sorted(tags)}; no se guarda la etiqueta de la fuente.")

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(HEADER + "\n")
            for line in metadata:
                fh.write(f"# {line}\n")
            if frames:
                table = pd.concat(frames, ignore_index=True)
                table.to_csv(
                    fh, sep=" ", header=False, index=False,
                    float_format=FLOAT_FORMAT, lineterminator="\n",
                )
    except OSError as e:
        raise EventFileError(f"No se pudo escribir el archivo de eventos {path}: {e}") from e

    n_events = sum(len(shot) for shot in shots)
    logger.info(f"Escritos {len(shots)} disparos ({n_events} eventos) en {path}")


def _parse_preamble(path: Path) -> Tuple[List[str], Dict[str, str], int]:
    """Lee la cabecera y los metadatos. Devuelve columnas, metadatos y líneas consumidas."""
    try:
        with path.open("r", encoding="utf-8") as fh:
            comment_lines = []
            for line in fh:
                if not line.startswith("#"):
                    break
                comment_lines.append(line.rstrip("\r\n"))
    except OSError as e:
        raise EventFileError(f"No se pudo leer el archivo de eventos {path}: {e}") from e

    if not comment_lines:
        raise EventFileError(f"{path}, línea 1: falta la cabecera '{HEADER}'.")

    tokens = comment_lines[0][1:].split()
    unknown = [tok for tok in tokens if tok not in HEADER_COLUMNS]
    if unknown:
        raise EventFileError(f"{path}, línea 1: columnas desconocidas {unknown}.")
    missing = [name for name in HEADER_COLUMNS if name not in tokens]
    if missing or len(set(tokens)) != len(tokens):
        raise EventFileError(f"{path}, línea 1: cabecera incompleta o repetida, faltan {missing}.")
    columns = [HEADER_COLUMNS[tok] for tok in tokens]

    metadata: Dict[str, str] = {}
    for offset, line in enumerate(comment_lines[1:], start=2):
        body = line[1:].strip()
        if "=" not in body:
            logger.debug(f"{path}, línea {offset}: comentario ignorado.")
            continue
        key, value = body.split("=", 1)
        metadata[key.strip()] = value.strip()
    return columns, metadata, len(comment_lines)


def read_events(path: Union[str, Path]) -> List[Shot]:
    """
    Reconstruye los disparos de un archivo de eventos.

    Las filas pueden venir en cualquier orden; dentro de cada disparo los
    eventos se normalizan por tiempo de llegada ascendente.

    Raises:
        EventFileError: Si la cabecera es inválida, si una fila está mal
                        formada (el mensaje indica el número de línea) o si
                        el archivo no puede leerse.
    """
    path = Path(path)
    columns, metadata, n_preamble = _parse_preamble(path)

    try:
        raw = pd.read_csv(
            path,
            sep=" ",
            header=None,
            names=columns + [_EXTRA_FIELD],
            skiprows=n_preamble,
            dtype=str,
            skip_blank_lines=False,
        )
    except pd.errors.EmptyDataError:
        raw = pd.DataFrame(columns=columns + [_EXTRA_FIELD], dtype=str)
    except pd.errors.ParserError as e:
        raise EventFileError(f"Fila mal formada en {path} (las líneas cuentan desde la cabecera de datos): {e}") from e

    raw = raw.dropna(how="all")
    numeric = pd.DataFrame({c: raw[c].map(_parse_float) for c in columns}, index=raw.index).astype(float)
    bad = numeric.isna().any(axis=1) | raw[_EXTRA_FIELD].notna()
    shot_ids = numeric["shot"]
    bad |= (shot_ids < 0) | (shot_ids != np.floor(shot_ids))
    bad |= ~np.isfinite(numeric[["x", "y", "t"]]).all(axis=1) | (numeric["t"] < 0)
    if bad.any():
        first = int(raw.index[bad.to_numpy()][0])
        line_number = n_preamble + first + 1
        raise EventFileError(f"{path}, línea {line_number}: fila mal formada.")

    numeric["shot"] = numeric["shot"].astype(np.int64)
    numeric = numeric.sort_values(["shot", "t"], kind="mergesort")

    tag = Statistics(metadata["source"]) if "source" in metadata else Statistics.DISTINGUISHABLE
    if "source" not in metadata:
        logger.warning(f"{path} no declara la fuente; se asume '{tag.value}'.")

    shots: Dict[int, Shot] = {
        int(shot_id): Shot(int(shot_id), group["x"].to_numpy(), group["y"].to_numpy(), group["t"].to_numpy(), tag)
        for shot_id, group in numeric.groupby("shot", sort=True)
    }
    for token in filter(None, metadata.get("empty_shots", "").split(",")):
        shot_id = int(token)
        if shot_id in shots:
            raise EventFileError(f"{path}: el disparo {shot_id} figura como vacío pero tiene eventos.")
        shots[shot_id] = Shot(shot_id, source_tag=tag)

    result = [shots[k] for k in sorted(shots)]
    logger.info(f"Leídos {len(result)} disparos ({len(numeric)} eventos) de {path}")
    return result
