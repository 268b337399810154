#pragma once

// Session event log. On disk: JSONL, header object on line 0, one event per
// following line.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltm/error.hpp"
#include "ltm/session/json_io.hpp"

namespace ltm::session {

inline constexpr int kLogSchema = 1;

enum class EventKind {
  SessionStarted,
  TrialStarted,
  PromptIssued,
  BehaviorObserved,
  ResponseClassified,
  RewardDelivered,
  TrialEnded,
  InterRobotExchange,
  ImitationActivated,
  SessionEnded,
};

inline constexpr EventKind kAllEventKinds[] = {
    EventKind::SessionStarted,     EventKind::TrialStarted,    EventKind::PromptIssued,
    EventKind::BehaviorObserved,   EventKind::ResponseClassified, EventKind::RewardDelivered,
    EventKind::TrialEnded,         EventKind::InterRobotExchange, EventKind::ImitationActivated,
    EventKind::SessionEnded,
};

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::SessionStarted: return "SessionStarted";
    case EventKind::TrialStarted: return "TrialStarted";
    case EventKind::PromptIssued: return "PromptIssued";
    case EventKind::BehaviorObserved: return "BehaviorObserved";
    case EventKind::ResponseClassified: return "ResponseClassified";
    case EventKind::RewardDelivered: return "RewardDelivered";
    case EventKind::TrialEnded: return "TrialEnded";
    case EventKind::InterRobotExchange: return "InterRobotExchange";
    case EventKind::ImitationActivated: return "ImitationActivated";
    case EventKind::SessionEnded: return "SessionEnded";
  }
  return "?";
}

inline EventKind parse_event_kind(std::string_view s) {
  for (auto k : kAllEventKinds) {
    if (to_string(k) == s) return k;
  }
  throw FormatError("unknown event kind '" + std::string(s) + "'");
}

struct SessionEvent {
  std::uint64_t seq = 0;
  Millis t{0};
  EventKind kind = EventKind::SessionStarted;
  json payload = json::object();

  friend bool operator==(const SessionEvent&, const SessionEvent&) = default;
};

enum class Mode { Simulated, Operator };

inline std::string_view to_string(Mode m) { return m == Mode::Simulated ? "simulated" : "operator"; }

struct SessionHeader {
  ProtocolConfig config;
  std::uint64_t seed = 0;
  Mode mode = Mode::Simulated;
  // Simulated: the participant model and trial count. Operator: the operator id.
  json participant = json::object();

  friend bool operator==(const SessionHeader& a, const SessionHeader& b) {
    return config_to_json(a.config) == config_to_json(b.config) && a.seed == b.seed && a.mode == b.mode &&
           a.participant == b.participant;
  }
};

inline json header_to_json(const SessionHeader& h) {
  return {
      {"schema", kLogSchema},
      {"config", config_to_json(h.config)},
      {"seed", h.seed},
      {"variant", std::string(to_string(h.config.variant))},
      {"participant", h.participant},
  };
}

inline SessionHeader header_from_json(const json& j) {
  if (!j.is_object() || !j.contains("schema")) throw FormatError("log header: not a header object");
  if (j.at("schema") != kLogSchema) throw FormatError("log header: unsupported schema " + j.at("schema").dump());
  SessionHeader h;
  try {
    h.config = config_from_json(j.at("config"));
    h.seed = j.at("seed").get<std::uint64_t>();
    h.participant = j.at("participant");
    const auto mode = h.participant.at("mode").get<std::string>();
    if (mode != "simulated" && mode != "operator") throw FormatError("log header: unknown mode '" + mode + "'");
    h.mode = mode == "operator" ? Mode::Operator : Mode::Simulated;
    if (j.at("variant").get<std::string>() != to_string(h.config.variant)) {
      throw FormatError("log header: variant disagrees with config");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("log header: ") + e.what());
  }
  return h;
}

// Digest carried by SessionEnded, binding the event stream to its header.
inline std::string header_digest(const SessionHeader& h) { return hex64(fnv1a64(header_to_json(h).dump())); }

inline json event_to_json(const SessionEvent& e) {
  return {{"seq", e.seq}, {"t_ms", e.t.count()}, {"kind", std::string(to_string(e.kind))}, {"payload", e.payload}};
}

inline SessionEvent event_from_json(const json& j) {
  if (!j.is_object() || j.size() != 4) throw FormatError("event: expected exactly {seq, t_ms, kind, payload}");
  try {
    SessionEvent e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.t = Millis{j.at("t_ms").get<std::int64_t>()};
    e.kind = parse_event_kind(j.at("kind").get<std::string>());
    e.payload = j.at("payload");
    return e;
  } catch (const json::exception& ex) {
    throw FormatError(std::string("event: ") + ex.what());
  }
}

struct SessionLog {
  SessionHeader header;
  std::vector<SessionEvent> events;

  bool ended() const { return !events.empty() && events.back().kind == EventKind::SessionEnded; }
};

// Append side: assigns seq and keeps timestamps non-decreasing.
class LogWriter {
 public:
  explicit LogWriter(SessionHeader header) { log_.header = std::move(header); }

  const SessionEvent& append(Millis t, EventKind kind, json payload) {
    require(!log_.ended(), "log already closed by SessionEnded");
    if (!log_.events.empty()) {
      require(t >= log_.events.back().t, "event timestamps must be non-decreasing");
    }
    log_.events.push_back({log_.events.size(), t, kind, std::move(payload)});
    return log_.events.back();
  }

  const SessionLog& log() const { return log_; }
  SessionLog take() { return std::move(log_); }

 private:
  SessionLog log_;
};

inline std::string to_jsonl(const SessionLog& log) {
  std::string out = header_to_json(log.header).dump();
  out += '\n';
  for (const auto& e : log.events) {
    out += event_to_json(e).dump();
    out += '\n';
  }
  return out;
}

inline SessionLog parse_jsonl(std::istream& in, const std::string& origin = "log") {
  SessionLog log;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      if (!have_header) {
        log.header = header_from_json(j);
        have_header = true;
        continue;
      }
      auto e = event_from_json(j);
      if (e.seq != log.events.size()) {
        throw FormatError("seq " + std::to_string(e.seq) + " out of order (expected " +
                          std::to_string(log.events.size()) + ")");
      }
      if (!log.events.empty() && e.t < log.events.back().t) throw FormatError("timestamps decrease");
      log.events.push_back(std::move(e));
    } catch (const FormatError& e) {
      throw FormatError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw FormatError(origin + ": empty log");
  return log;
}

inline SessionLog parse_jsonl(const std::string& text) {
  std::istringstream in(text);
  return parse_jsonl(in);
}

inline SessionLog read_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return parse_jsonl(in, path.string());
}

inline void write_log(const SessionLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_jsonl(log);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// Streams events to disk as they are appended; each line is flushed whole.
class JsonlSink {
 public:
  JsonlSink(const std::filesystem::path& path, const SessionHeader& header)
      : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << header_to_json(header).dump() << '\n' << std::flush;
  }
  void write(const SessionEvent& e) { out_ << event_to_json(e).dump() << '\n' << std::flush; }

 private:
  std::ofstream out_;
};

}  // namespace ltm::session
