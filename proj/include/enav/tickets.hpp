#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "enav/time.hpp"
#include "enav/timeseries.hpp"

namespace enav {

/// Closed interval [start, end] of grid timestamps.
struct Violation {
  Timestamp start = 0;
  Timestamp end = 0;
  std::size_t steps = 0;

  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Maximal runs of FALSE with at least `min_steps` samples. MISSING and
/// UNDEFINED end a run. Throws KindMismatch for numeric series and
/// InvalidArgument for min_steps == 0.
std::vector<Violation> scan_violations(const Series& rule_series, std::size_t min_steps);

enum class TicketState { Open, Extended, Closed, Acknowledged };

std::string_view to_string(TicketState s);
std::optional<TicketState> ticket_state_from(std::string_view s);

struct Ticket {
  std::string id;
  std::string rule_id;
  std::vector<std::string> sensors;
  Timestamp start = 0;
  Timestamp end = 0;
  std::size_t step_count = 0;
  TicketState state = TicketState::Open;
  Timestamp created = 0;
  Timestamp updated = 0;
  /// Input values at the first violating sample; nullopt = not valid there.
  std::map<std::string, std::optional<double>> context;
  std::string message;

  bool active() const { return state == TicketState::Open || state == TicketState::Extended; }

  friend bool operator==(const Ticket&, const Ticket&) = default;
};

/// 16 hex digits of FNV-1a over "<rule_id>@<ISO start>".
std::string ticket_id(const std::string& rule_id, Timestamp start);

std::string ticket_to_json(const Ticket& t);
/// Throws IOFailure on malformed input.
Ticket ticket_from_json(const std::string& line);

/// One transition, as written to the outbox.
struct TicketEvent {
  std::string event;  // OPENED, EXTENDED, CLOSED, ACKNOWLEDGED
  std::string ticket_id;
  std::string rule_id;
  Timestamp at = 0;
  Timestamp start = 0;
  Timestamp end = 0;

  std::string to_json() const;
};

/// `tickets/tickets.jsonl` replayed last-writer-wins by id, plus the
/// `tickets/outbox.jsonl` event log. Changes are buffered until flush().
class TicketStore {
 public:
  TicketStore() = default;
  /// Reads `<dir>/tickets.jsonl` if present.
  static TicketStore open(const std::filesystem::path& dir);

  /// Tickets ordered by (rule, start).
  std::vector<Ticket> tickets() const;
  std::vector<Ticket> tickets_of(const std::string& rule_id) const;
  const Ticket* find(const std::string& id) const;

  /// Records a changed ticket and its transition.
  void put(const Ticket& t, const std::string& event, Timestamp at);

  const std::vector<std::string>& pending_lines() const { return pending_; }
  const std::vector<TicketEvent>& pending_events() const { return events_; }

  /// Appends pending records and events; nothing is written when no
  /// ticket changed. Throws IOFailure.
  void flush();

 private:
  std::filesystem::path dir_;
  std::map<std::string, Ticket> by_id_;
  std::vector<std::string> pending_;
  std::vector<TicketEvent> events_;
};

/// Merges violations of one rule evaluated over `grid` into the store.
///
/// A violation overlapping an existing ticket of the rule, or abutting an
/// active one, extends it (EXTENDED); otherwise a new OPEN ticket is made.
/// Active tickets ending more than one step before the last evaluated
/// timestamp become CLOSED. `inputs` supply the context values. Ticket
/// timestamps are data times, so a rerun over the same data changes nothing.
std::vector<Ticket> upsert_tickets(TicketStore& store, const std::vector<Violation>& violations,
                                   const std::string& rule_id, const std::vector<const Series*>& inputs,
                                   const TimeGrid& grid);

/// Sets a ticket to ACKNOWLEDGED at data time `at`. Throws InvalidArgument
/// for unknown ids.
void acknowledge(TicketStore& store, const std::string& id, Timestamp at);

/// Per local day share of TRUE/FALSE/MISSING/UNDEFINED samples of a rule.
struct QualityRow {
  std::string day;  // YYYY-MM-DD, local
  std::size_t samples = 0;
  double true_fraction = 0.0;
  double false_fraction = 0.0;
  double missing_fraction = 0.0;
  double undefined_fraction = 0.0;

  friend bool operator==(const QualityRow&, const QualityRow&) = default;
};

/// Throws KindMismatch for numeric series.
std::vector<QualityRow> daily_quality(const Series& rule_series, const TimeZone& tz);

/// `day,samples,true,false,missing,undefined`.
std::string quality_csv(const std::vector<QualityRow>& rows);
/// Throws IOFailure on malformed input.
std::vector<QualityRow> parse_quality_csv(const std::string& text);
/// Rows of `update` replace rows of `existing` with the same day; sorted by day.
std::vector<QualityRow> merge_quality(std::vector<QualityRow> existing, const std::vector<QualityRow>& update);

}  // namespace enav
