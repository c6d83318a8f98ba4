"""Frequency-secured unit commitment with aggregated V2G fleets.

Subpackages and modules: ``freq`` (post-outage frequency dynamics), ``drcc``
(distributionally robust chance constraints on fleet response), ``fleet``
(virtual-battery fleet model), ``connectivity`` (charging-event ingestion and
ΔN statistics), ``conic`` (conic programs, backends, branch and bound),
``scheduler`` (scenario tree, hourly program, rolling simulation),
``validation`` (Monte Carlo nadir security) and ``cli``.
"""

__version__ = "0.1.0"
