"""stagesim: deterministic simulation of location-based AR stage experiences.

Subsystems:

- ``geometry``   venue digital twins: floorplan tracing, extrusion, OBJ,
                 raycast / line-of-sight / walkable queries
- ``stage``      cue-sheet engine: zones, triggers, clips, spiral advancement
- ``guidance``   particles, in-world arrow, radar, compass, audio gain
- ``distortion`` room-distortion treatments, timeline, particle field, metrics
- ``bubbles``    the bubble instrument and its note events
- ``agents``     audience-agent env, rewards, policy, BC + PPO training
- ``harness``    scenario configs, walkers, runner, reports, CLI
"""

__version__ = "0.1.0"
