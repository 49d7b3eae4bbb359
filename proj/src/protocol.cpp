#include "coloc/protocol.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace coloc {

namespace {

std::size_t belief_bytes(const Belief& b) {
  const std::size_t n = static_cast<std::size_t>(b.mean.size());
  return 8 * (n + n * n) + 8;  // mean + covariance + id/stamp word
}

AgentRuntime* find_agent(std::vector<AgentRuntime>& world, AgentId id) {
  for (AgentRuntime& rt : world) {
    if (rt.id == id) return &rt;
  }
  return nullptr;
}

MessageRecord record_of(const Message& msg) {
  return {msg.stamp, msg.from, msg.to,
          msg.is_request() ? std::string("meas_request") : std::string("belief_reply"),
          message_wire_bytes(msg)};
}

}  // namespace

std::size_t message_wire_bytes(const Message& msg) {
  std::size_t bytes = 24;  // from, to, stamp
  if (msg.is_request()) {
    const auto& p = std::get<MeasRequestPayload>(msg.payload);
    const std::size_t nz = static_cast<std::size_t>(p.meas.z.size());
    bytes += 8 + 8 * (nz + nz * nz);  // kind + z + R
    bytes += belief_bytes(p.observer_belief);
  } else {
    bytes += belief_bytes(std::get<BeliefReplyPayload>(msg.payload).target_belief);
  }
  return bytes;
}

std::vector<Message> step_agent(AgentRuntime& rt, const UnicycleInput& u,
                                const StepEvents& own_events, int t) {
  rt.belief = predict_belief(rt.belief, u, rt.config.noise, rt.config.process_noise);
  for (const AbsoluteEvent& ev : own_events.absolute) {
    if (ev.agent != rt.id) continue;
    rt.belief = abs_correct_belief(rt.belief, ev.z, ev.landmark, ev.r_std);
  }
  rt.step_prior = rt.belief;

  std::vector<Message> out;
  for (const RelativeMeasurement& meas : own_events.relative) {
    if (meas.observer != rt.id) continue;
    if (meas.stamp != t) {
      throw std::invalid_argument("step_agent: event stamp does not match step");
    }
    Message msg;
    msg.from = rt.id;
    msg.to = meas.target;
    msg.stamp = t;
    msg.payload = MeasRequestPayload{meas, rt.step_prior};
    out.push_back(std::move(msg));
  }
  return out;
}

Message serve_measurement(AgentRuntime& rt, const Message& request) {
  if (!request.is_request()) {
    throw std::invalid_argument("serve_measurement: not a measurement request");
  }
  const auto& payload = std::get<MeasRequestPayload>(request.payload);
  if (payload.meas.target != rt.id) {
    throw std::invalid_argument("serve_measurement: request addressed to another agent");
  }

  Message reply;
  reply.from = rt.id;
  reply.to = request.from;
  reply.stamp = request.stamp;
  reply.payload = BeliefReplyPayload{rt.step_prior, request.from};

  if (rt.config.fusion_enabled) {
    FusionResult r = sequential_update(
        rt.belief, {{payload.observer_belief, payload.meas}}, rt.config.method,
        rt.config.fusion);
    rt.belief = r.belief;
  }
  return reply;
}

StepResult route_messages(std::vector<AgentRuntime>& world, std::vector<Message> requests,
                          int t) {
  StepResult result;
  // deterministic service order
  std::sort(requests.begin(), requests.end(), [](const Message& a, const Message& b) {
    return std::tie(a.from, a.to) < std::tie(b.from, b.to);
  });

  std::map<AgentId, std::vector<PartnerMeasurement>> observer_items;
  for (Message& req : requests) {
    AgentRuntime* target = find_agent(world, req.to);
    if (target == nullptr) {
      ++result.dropped_events;  // no reply can arrive within this step
      continue;
    }
    result.messages.push_back(record_of(req));
    const auto& payload = std::get<MeasRequestPayload>(req.payload);
    Message reply = serve_measurement(*target, req);
    result.messages.push_back(record_of(reply));
    const auto& reply_payload = std::get<BeliefReplyPayload>(reply.payload);
    observer_items[req.from].push_back({reply_payload.target_belief, payload.meas});
    ++result.processed_relative;
  }

  for (auto& [observer_id, items] : observer_items) {
    AgentRuntime* observer = find_agent(world, observer_id);
    if (observer == nullptr || !observer->config.fusion_enabled) continue;
    std::sort(items.begin(), items.end(),
              [](const PartnerMeasurement& a, const PartnerMeasurement& b) {
                return a.meas.target < b.meas.target;
              });
    FusionResult r =
        sequential_update(observer->belief, items, observer->config.method,
                          observer->config.fusion);
    observer->belief = r.belief;
  }
  (void)t;
  return result;
}

StepResult step_world(std::vector<AgentRuntime>& world,
                      const std::vector<UnicycleInput>& inputs, const StepEvents& events,
                      int t) {
  if (inputs.size() != world.size()) {
    throw std::invalid_argument("step_world: one input per agent required");
  }
  std::vector<Message> requests;
  for (std::size_t k = 0; k < world.size(); ++k) {
    std::vector<Message> msgs = step_agent(world[k], inputs[k], events, t);
    requests.insert(requests.end(), std::make_move_iterator(msgs.begin()),
                    std::make_move_iterator(msgs.end()));
  }
  return route_messages(world, std::move(requests), t);
}

}  // namespace coloc
