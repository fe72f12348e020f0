#include "enav/tickets.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <tuple>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "enav/error.hpp"
#include "enav/eval/logic.hpp"

namespace enav {

namespace {

using ojson = nlohmann::ordered_json;

void require_boolean(const Series& s, const char* what) {
  if (s.kind() != SeriesKind::Boolean) {
    throw Error(ErrorCode::KindMismatch, fmt::format("{} needs a Boolean series, '{}' is numeric", what, s.sensor_id()));
  }
}

Timestamp parse_ts(const ojson& j, const char* key) {
  const auto t = parse_iso8601(j.at(key).get<std::string>());
  if (!t) throw Error(ErrorCode::IOFailure, fmt::format("bad timestamp in ticket field '{}'", key));
  return *t;
}

std::string render_message(const Ticket& t) {
  std::string ctx;
  for (const auto& [id, v] : t.context) {
    if (!ctx.empty()) ctx += ", ";
    ctx += v ? fmt::format("{}={}", id, *v) : fmt::format("{}=n/a", id);
  }
  std::string msg = fmt::format("rule {} FALSE for {} steps from {} to {}", t.rule_id, t.step_count,
                                format_iso8601_utc(t.start), format_iso8601_utc(t.end));
  if (!ctx.empty()) msg += fmt::format("; at {}: {}", format_iso8601_utc(t.start), ctx);
  return msg;
}

std::map<std::string, std::optional<double>> context_at(const std::vector<const Series*>& inputs, Timestamp t) {
  std::map<std::string, std::optional<double>> out;
  for (const Series* s : inputs) {
    std::optional<double> v;
    if (const auto i = s->grid().index_of(t); i && *i < s->size() && (*s)[*i].is_valid()) v = (*s)[*i].value;
    out[s->sensor_id()] = v;
  }
  return out;
}

void append_lines(const std::filesystem::path& file, const std::vector<std::string>& lines) {
  std::ofstream out(file, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::IOFailure, fmt::format("cannot append to {}", file.string()));
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw Error(ErrorCode::IOFailure, fmt::format("write to {} failed", file.string()));
}

}  // namespace

std::vector<Violation> scan_violations(const Series& rule_series, std::size_t min_steps) {
  require_boolean(rule_series, "scan_violations");
  if (min_steps == 0) throw Error(ErrorCode::InvalidArgument, "min_steps must be at least 1");
  std::vector<Violation> out;
  const TimeGrid& g = rule_series.grid();
  std::size_t run = 0;
  auto close = [&](std::size_t end_excl) {
    if (run >= min_steps) out.push_back({g.timestamp(end_excl - run), g.timestamp(end_excl - 1), run});
    run = 0;
  };
  for (std::size_t i = 0; i < rule_series.size(); ++i) {
    if (eval::to_bool(rule_series[i]) == eval::BoolValue::False) {
      ++run;
    } else {
      close(i);
    }
  }
  close(rule_series.size());
  return out;
}

std::string_view to_string(TicketState s) {
  switch (s) {
    case TicketState::Open: return "OPEN";
    case TicketState::Extended: return "EXTENDED";
    case TicketState::Closed: return "CLOSED";
    case TicketState::Acknowledged: return "ACKNOWLEDGED";
  }
  return "OPEN";
}

std::optional<TicketState> ticket_state_from(std::string_view s) {
  for (const auto st : {TicketState::Open, TicketState::Extended, TicketState::Closed, TicketState::Acknowledged}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

std::string ticket_id(const std::string& rule_id, Timestamp start) {
  std::uint64_t h = 14695981039346656037ull;
  for (const char c : rule_id + "@" + format_iso8601_utc(start)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

std::string ticket_to_json(const Ticket& t) {
  ojson j;
  j["id"] = t.id;
  j["rule_id"] = t.rule_id;
  j["sensors"] = t.sensors;
  j["start"] = format_iso8601_utc(t.start);
  j["end"] = format_iso8601_utc(t.end);
  j["step_count"] = t.step_count;
  j["state"] = std::string(to_string(t.state));
  j["created"] = format_iso8601_utc(t.created);
  j["updated"] = format_iso8601_utc(t.updated);
  j["context"] = ojson::object();
  for (const auto& [id, v] : t.context) j["context"][id] = v ? ojson(*v) : ojson(nullptr);
  j["message"] = t.message;
  return j.dump();
}

Ticket ticket_from_json(const std::string& line) {
  try {
    const ojson j = ojson::parse(line);
    Ticket t;
    t.id = j.at("id").get<std::string>();
    t.rule_id = j.at("rule_id").get<std::string>();
    t.sensors = j.at("sensors").get<std::vector<std::string>>();
    t.start = parse_ts(j, "start");
    t.end = parse_ts(j, "end");
    t.step_count = j.at("step_count").get<std::size_t>();
    const auto st = ticket_state_from(j.at("state").get<std::string>());
    if (!st) throw Error(ErrorCode::IOFailure, "unknown ticket state");
    t.state = *st;
    t.created = parse_ts(j, "created");
    t.updated = parse_ts(j, "updated");
    for (const auto& [id, v] : j.at("context").items()) {
      t.context[id] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    }
    t.message = j.at("message").get<std::string>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IOFailure, fmt::format("malformed ticket record: {}", e.what()));
  }
}

std::string TicketEvent::to_json() const {
  ojson j;
  j["event"] = event;
  j["ticket"] = ticket_id;
  j["rule_id"] = rule_id;
  j["at"] = format_iso8601_utc(at);
  j["start"] = format_iso8601_utc(start);
  j["end"] = format_iso8601_utc(end);
  return j.dump();
}

TicketStore TicketStore::open(const std::filesystem::path& dir) {
  TicketStore s;
  s.dir_ = dir;
  std::ifstream in(dir / "tickets.jsonl", std::ios::binary);
  std::string line;
  std::size_t lineno = 0;
  while (in && std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      Ticket t = ticket_from_json(line);
      s.by_id_[t.id] = std::move(t);
    } catch (const Error& e) {
      throw Error(ErrorCode::IOFailure, fmt::format("{}:{}: {}", (dir / "tickets.jsonl").string(), lineno, e.what()));
    }
  }
  return s;
}

std::vector<Ticket> TicketStore::tickets() const {
  std::vector<Ticket> out;
  for (const auto& [id, t] : by_id_) out.push_back(t);
  std::sort(out.begin(), out.end(), [](const Ticket& a, const Ticket& b) {
    return std::tie(a.rule_id, a.start, a.id) < std::tie(b.rule_id, b.start, b.id);
  });
  return out;
}

std::vector<Ticket> TicketStore::tickets_of(const std::string& rule_id) const {
  std::vector<Ticket> out;
  for (auto& t : tickets()) {
    if (t.rule_id == rule_id) out.push_back(std::move(t));
  }
  return out;
}

const Ticket* TicketStore::find(const std::string& id) const {
  const auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &it->second;
}

void TicketStore::put(const Ticket& t, const std::string& event, Timestamp at) {
  by_id_[t.id] = t;
  pending_.push_back(ticket_to_json(t));
  events_.push_back({event, t.id, t.rule_id, at, t.start, t.end});
}

void TicketStore::flush() {
  if (pending_.empty() && events_.empty()) return;
  if (dir_.empty()) throw Error(ErrorCode::IOFailure, "ticket store has no directory");
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::IOFailure, fmt::format("cannot create {}: {}", dir_.string(), ec.message()));
  append_lines(dir_ / "tickets.jsonl", pending_);
  std::vector<std::string> ev;
  for (const auto& e : events_) ev.push_back(e.to_json());
  append_lines(dir_ / "outbox.jsonl", ev);
  pending_.clear();
  events_.clear();
}

std::vector<Ticket> upsert_tickets(TicketStore& store, const std::vector<Violation>& violations,
                                   const std::string& rule_id, const std::vector<const Series*>& inputs,
                                   const TimeGrid& grid) {
  const Duration p = grid.period;
  std::vector<std::string> sensors;
  for (const Series* s : inputs) sensors.push_back(s->sensor_id());

  std::vector<Violation> sorted = violations;
  std::sort(sorted.begin(), sorted.end(), [](const Violation& a, const Violation& b) { return a.start < b.start; });

  for (const Violation& v : sorted) {
    std::optional<Ticket> match;
    for (const Ticket& t : store.tickets_of(rule_id)) {
      const bool overlap = t.start <= v.end && v.start <= t.end;
      const bool abut = t.active() && (v.start == t.end + p || v.end + p == t.start);
      if (overlap || abut) {
        match = t;
        break;
      }
    }
    if (!match) {
      Ticket t;
      t.id = ticket_id(rule_id, v.start);
      t.rule_id = rule_id;
      t.sensors = sensors;
      t.start = v.start;
      t.end = v.end;
      t.step_count = static_cast<std::size_t>((v.end - v.start) / p) + 1;
      t.state = TicketState::Open;
      t.created = t.updated = v.end;
      t.context = context_at(inputs, v.start);
      t.message = render_message(t);
      store.put(t, "OPENED", v.end);
      continue;
    }
    Ticket t = *match;
    const Timestamp start = std::min(t.start, v.start);
    const Timestamp end = std::max(t.end, v.end);
    if (start == t.start && end == t.end) continue;
    if (start != t.start) {
      const auto ctx = context_at(inputs, start);
      if (!inputs.empty()) t.context = ctx;
    }
    t.start = start;
    t.end = end;
    t.step_count = static_cast<std::size_t>((end - start) / p) + 1;
    if (t.state != TicketState::Acknowledged) t.state = TicketState::Extended;
    t.updated = end;
    t.message = render_message(t);
    store.put(t, "EXTENDED", end);
  }

  if (!grid.empty()) {
    const Timestamp latest = grid.timestamp(grid.count - 1);
    for (Ticket t : store.tickets_of(rule_id)) {
      if (!t.active() || latest - t.end <= p) continue;
      t.state = TicketState::Closed;
      // The first instant at which the closing rule can hold.
      t.updated = t.end + 2 * p;
      store.put(t, "CLOSED", t.updated);
    }
  }
  return store.tickets_of(rule_id);
}

void acknowledge(TicketStore& store, const std::string& id, Timestamp at) {
  const Ticket* found = store.find(id);
  if (!found) throw Error(ErrorCode::InvalidArgument, fmt::format("unknown ticket '{}'", id));
  if (found->state == TicketState::Acknowledged) return;
  Ticket t = *found;
  t.state = TicketState::Acknowledged;
  t.updated = at;
  store.put(t, "ACKNOWLEDGED", at);
}

std::vector<QualityRow> daily_quality(const Series& rule_series, const TimeZone& tz) {
  require_boolean(rule_series, "daily_quality");
  std::vector<QualityRow> rows;
  std::vector<std::array<std::size_t, 4>> counts;
  CivilClock clock(tz);
  for (std::size_t i = 0; i < rule_series.size(); ++i) {
    const CivilTime ct = clock(rule_series.grid().timestamp(i));
    const std::string day = fmt::format("{:04}-{:02}-{:02}", ct.year, ct.month, ct.day);
    if (rows.empty() || rows.back().day != day) {
      rows.push_back({day});
      counts.push_back({});
    }
    ++rows.back().samples;
    ++counts.back()[static_cast<std::size_t>(eval::to_bool(rule_series[i]))];
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double n = static_cast<double>(rows[r].samples);
    const auto& c = counts[r];
    rows[r].true_fraction = static_cast<double>(c[static_cast<std::size_t>(eval::BoolValue::True)]) / n;
    rows[r].false_fraction = static_cast<double>(c[static_cast<std::size_t>(eval::BoolValue::False)]) / n;
    rows[r].missing_fraction = static_cast<double>(c[static_cast<std::size_t>(eval::BoolValue::Missing)]) / n;
    rows[r].undefined_fraction = static_cast<double>(c[static_cast<std::size_t>(eval::BoolValue::Undefined)]) / n;
  }
  return rows;
}

std::string quality_csv(const std::vector<QualityRow>& rows) {
  std::string out = "day,samples,true,false,missing,undefined\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{}\n", r.day, r.samples, r.true_fraction, r.false_fraction, r.missing_fraction,
                       r.undefined_fraction);
  }
  return out;
}

std::vector<QualityRow> parse_quality_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<QualityRow> rows;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    QualityRow r;
    std::istringstream ls(line);
    std::string f;
    std::vector<std::string> fields;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (fields.size() != 6) throw Error(ErrorCode::IOFailure, fmt::format("malformed quality row '{}'", line));
    try {
      r.day = fields[0];
      r.samples = std::stoul(fields[1]);
      r.true_fraction = std::stod(fields[2]);
      r.false_fraction = std::stod(fields[3]);
      r.missing_fraction = std::stod(fields[4]);
      r.undefined_fraction = std::stod(fields[5]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::IOFailure, fmt::format("malformed quality row '{}'", line));
    }
    rows.push_back(r);
  }
  return rows;
}

std::vector<QualityRow> merge_quality(std::vector<QualityRow> existing, const std::vector<QualityRow>& update) {
  std::map<std::string, QualityRow> by_day;
  for (auto& r : existing) by_day[r.day] = std::move(r);
  for (const auto& r : update) by_day[r.day] = r;
  std::vector<QualityRow> out;
  for (auto& [d, r] : by_day) out.push_back(std::move(r));
  return out;
}

}  // namespace enav
