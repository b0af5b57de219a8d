# hbtlab/pipeline/graph.py

import logging
from typing import List, Optional, TypedDict

from langgraph.graph import StateGraph

from hbtlab.core.model import FitError, Shot
from hbtlab.correlator.estimators import CorrelationFunction
from hbtlab.correlator.fitting import FitResult
from hbtlab.pipeline.orchestrator import HBTOrchestrator

logger = logging.getLogger(__name__)


# --- 1. Estado del pipeline (la pizarra compartida entre nodos) ---
class PipelineState(TypedDict, total=False):
    orchestrator: HBTOrchestrator
    shots: List[Shot]
    correlation: CorrelationFunction
    fit: Optional[FitResult]
    fit_error: Optional[str]


# --- 2. Nodos ---

def simulate_node(state: PipelineState) -> PipelineState:
    """Simula los disparos y escribe el archivo de eventos y el manifiesto."""
    logger.info("Pipeline: ejecutando nodo de simulación...")
    shots = state["orchestrator"].run_simulation()
    return {"shots": shots}


def correlate_node(state: PipelineState) -> PipelineState:
    """Estima g² a partir de los disparos en memoria y escribe la tabla."""
    logger.info("Pipeline: ejecutando nodo de correlación...")
    orchestrator = state["orchestrator"]
    corr = orchestrator.correlate(state["shots"])
    orchestrator.write_correlation(corr)
    return {"correlation": corr}


def fit_node(state: PipelineState) -> PipelineState:
    """Ajusta el modelo de pico/valle; un fallo del ajuste queda registrado en el estado."""
    logger.info("Pipeline: ejecutando nodo de ajuste...")
    orchestrator = state["orchestrator"]
    try:
        fit = orchestrator.fit(state["correlation"])
    except FitError as e:
        logger.error(f"Pipeline: el ajuste falló: {e}")
        return {"fit": None, "fit_error": str(e)}
    orchestrator.write_fit(fit)
    return {"fit": fit, "fit_error": None}


# --- 3. Grafo secuencial ---

def build_pipeline():
    """
    Construye y compila el grafo simulate → correlate → fit.

    Produce los mismos artefactos que encadenar las etapas a través de archivos.
    """
    workflow = StateGraph(PipelineState)

    workflow.add_node("simulate", simulate_node)
    workflow.add_node("correlate", correlate_node)
    workflow.add_node("fit", fit_node)

    workflow.set_entry_point("simulate")
    workflow.add_edge("simulate", "correlate")
    workflow.add_edge("correlate", "fit")
    workflow.set_finish_point("fit")

    return workflow.compile()


def run_pipeline(orchestrator: HBTOrchestrator) -> PipelineState:
    app = build_pipeline()
    return app.invoke({"orchestrator": orchestrator})
