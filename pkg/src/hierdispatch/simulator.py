"""Discrete-event engine for agents and the pending-incident queue.

State only changes at event times; between them agents move in straight
lines at constant speed. advance() replays each agent's internal
transitions (arrive at scene, finish service, head home, reach depot) up
to the target time, so callers may jump the clock to any future event.

The clock is integer milliseconds. Travel durations round up to the next
tick, which keeps effective speeds at or below nominal.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum

from .demand import Incident
from .spatial import Position, World
from .units import ceil_ms


class AgentBusy(Exception):
    pass


class UnknownIncident(Exception):
    pass


class DepotFull(Exception):
    pass


class UnknownRegion(Exception):
    pass


class AgentStatus(Enum):
    WAITING = "waiting"
    IN_TRANSIT = "in_transit"
    RESPONDING = "responding"
    SERVICING = "servicing"


@dataclass(slots=True)
class Agent:
    id: int
    position: Position
    destination: Position
    status: AgentStatus
    region: int
    depot: int
    busy_until: int | None = None      # servicing only
    incident: Incident | None = None   # incident being responded to / serviced
    move_from: Position | None = None  # current straight-line segment
    move_started_ms: int | None = None
    arrive_ms: int | None = None
    failure_window: tuple[int, int] | None = None  # undispatchable in [a, b)

    def clone(self) -> "Agent":
        return Agent(self.id, self.position, self.destination, self.status,
                     self.region, self.depot, self.busy_until, self.incident,
                     self.move_from, self.move_started_ms, self.arrive_ms,
                     self.failure_window)

    def is_failed(self, t_ms: int) -> bool:
        return (self.failure_window is not None
                and self.failure_window[0] <= t_ms < self.failure_window[1])

    def is_dispatchable(self, t_ms: int) -> bool:
        """Free for a new dispatch: waiting or in transit, and not failed."""
        return (self.status in (AgentStatus.WAITING, AgentStatus.IN_TRANSIT)
                and not self.is_failed(t_ms))


@dataclass(slots=True)
class SystemState:
    clock_ms: int
    pending: list[Incident]  # FIFO by report time
    agents: list[Agent]

    def clone(self) -> "SystemState":
        return SystemState(self.clock_ms, list(self.pending),
                           [a.clone() for a in self.agents])

    def agent(self, agent_id: int) -> Agent:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise KeyError(f"no agent {agent_id}")

    def idle_agents(self, region: int | None = None) -> list[Agent]:
        out = [a for a in self.agents if a.is_dispatchable(self.clock_ms)]
        if region is not None:
            out = [a for a in out if a.region == region]
        return out


class EventKind(IntEnum):
    """Event kinds; the integer value is the tie-break priority at equal
    timestamps (freed and recovered agents become dispatchable before a
    simultaneous incident is handled; planning settles last)."""

    AGENT_AVAILABLE = 0
    AGENT_RECOVERY = 1
    INCIDENT_OCCURRENCE = 2
    AGENT_FAILURE = 3
    PLANNING_STEP = 4


@dataclass(frozen=True, order=True)
class SimEvent:
    """Queue entry; orders by (time, kind priority, payload id)."""

    time_ms: int
    kind: EventKind
    payload_id: int = 0


def _begin_move(agent: Agent, t_ms: int, dest: Position, world: World) -> None:
    agent.move_from = agent.position
    agent.move_started_ms = t_ms
    agent.destination = dest
    agent.arrive_ms = t_ms + ceil_ms(world.travel.travel_time(agent.position, dest))


def _step_agent(agent: Agent, to_ms: int, world: World) -> None:
    """Replay one agent's internal transitions up to to_ms."""
    while True:
        if agent.status is AgentStatus.WAITING:
            return
        if agent.status is AgentStatus.SERVICING:
            if agent.busy_until > to_ms:
                return
            t = agent.busy_until
            agent.busy_until = None
            agent.incident = None
            agent.status = AgentStatus.IN_TRANSIT
            _begin_move(agent, t, world.depot_pos(agent.depot), world)
            continue
        # moving: responding or in_transit
        if agent.arrive_ms <= to_ms:
            agent.position = agent.destination
            if agent.status is AgentStatus.RESPONDING:
                agent.status = AgentStatus.SERVICING
                agent.busy_until = agent.arrive_ms + agent.incident.service_duration_ms
                agent.arrive_ms = None
                continue
            agent.status = AgentStatus.WAITING
            agent.arrive_ms = None
            return
        frac = (to_ms - agent.move_started_ms) / (agent.arrive_ms - agent.move_started_ms)
        agent.position = (agent.move_from[0] + frac * (agent.destination[0] - agent.move_from[0]),
                          agent.move_from[1] + frac * (agent.destination[1] - agent.move_from[1]))
        return


def advance(state: SystemState, to_ms: int, world: World) -> SystemState:
    """Move the clock forward, updating every agent in place."""
    if to_ms < state.clock_ms:
        raise ValueError(f"cannot advance backwards ({state.clock_ms} -> {to_ms})")
    if to_ms == state.clock_ms:
        return state
    for agent in state.agents:
        _step_agent(agent, to_ms, world)
    state.clock_ms = to_ms
    return state


def dispatch(state: SystemState, agent_id: int, incident: Incident,
             world: World) -> float:
    """Send an agent to a pending incident; returns response time in seconds.

    Response time = queue delay (report to now) + travel, with travel
    rounded up to the millisecond tick.
    """
    agent = state.agent(agent_id)
    if agent.status in (AgentStatus.RESPONDING, AgentStatus.SERVICING):
        raise AgentBusy(f"agent {agent_id} is {agent.status.value}")
    try:
        state.pending.remove(incident)
    except ValueError:
        raise UnknownIncident(f"incident {incident.id} is not pending") from None
    agent.status = AgentStatus.RESPONDING
    agent.incident = incident
    _begin_move(agent, state.clock_ms, world.cell_pos(incident.cell), world)
    return (state.clock_ms - incident.report_time_ms
            + (agent.arrive_ms - state.clock_ms)) / 1000.0


def depot_occupancy(state: SystemState, depot_id: int,
                    exclude_agent: int | None = None) -> int:
    """Agents assigned to a depot; busy agents keep their slot reserved."""
    return sum(1 for a in state.agents
               if a.depot == depot_id and a.id != exclude_agent)


def assign_depot(state: SystemState, agent_id: int, depot_id: int,
                 world: World) -> SystemState:
    """Reassign an idle agent's home depot and send it on its way."""
    agent = state.agent(agent_id)
    if agent.status in (AgentStatus.RESPONDING, AgentStatus.SERVICING):
        raise AgentBusy(f"agent {agent_id} is {agent.status.value}")
    depot = world.depot(depot_id)
    if depot_occupancy(state, depot_id, exclude_agent=agent_id) >= depot.capacity:
        raise DepotFull(f"depot {depot_id} is at capacity {depot.capacity}")
    agent.depot = depot_id
    dest = world.depot_pos(depot_id)
    if agent.position == dest:
        agent.status = AgentStatus.WAITING
        agent.destination = dest
        agent.arrive_ms = None
    else:
        agent.status = AgentStatus.IN_TRANSIT
        _begin_move(agent, state.clock_ms, dest, world)
    return state


def assign_region(state: SystemState, agent_id: int, region: int,
                  world: World) -> SystemState:
    """Reassign an agent's region; the depot move is a separate decision."""
    if world.partition is None or region not in world.partition.region_depots:
        raise UnknownRegion(f"region {region} does not exist")
    state.agent(agent_id).region = region
    return state


def greedy_dispatch_pending(state: SystemState, world: World) -> list[dict]:
    """Dispatch the nearest free agent to each queued incident (FIFO).

    Runs until the queue is empty or no agent is dispatchable; ties in
    travel time go to the lowest agent id. Returns one record per
    dispatch: incident, agent_id, dispatch_ms, arrive_ms, response_s.
    """
    records = []
    while state.pending:
        incident = state.pending[0]
        candidates = [a for a in state.agents if a.is_dispatchable(state.clock_ms)]
        if not candidates:
            break
        target = world.cell_pos(incident.cell)
        best = min(candidates,
                   key=lambda a: (world.travel.travel_time(a.position, target), a.id))
        response_s = dispatch(state, best.id, incident, world)
        records.append({"incident": incident, "agent_id": best.id,
                        "dispatch_ms": state.clock_ms,
                        "arrive_ms": best.arrive_ms, "response_s": response_s})
    return records
