"""Programmable observability for service graphs.

Submodules: ``measure_lang`` (MEASURE parser), ``zone_engine``,
``ratemon``, ``delaymon``, ``nffg`` (graph model and checks),
``query_engine`` (Datalog and aggregation queries), ``broker``,
``metric_store``, ``sim`` (scenarios) and ``cli``.
"""

__version__ = "0.1.0"
