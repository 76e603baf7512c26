"""Nurse redeployment planning across a hospital network.

Subpackage map: :mod:`nurseflow.core` holds the cost model and transfer
state machine, :mod:`nurseflow.uncertainty` the demand boxes,
:mod:`nurseflow.lp`/:mod:`nurseflow.ldr` the robust linear program,
:mod:`nurseflow.planner` the rolling-horizon loop,
:mod:`nurseflow.simulator` the patient-flow demand generator,
:mod:`nurseflow.evaluator` the out-of-sample metrics and
:mod:`nurseflow.cli` the command-line front end.
"""

__version__ = "0.1.0"
