#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "enav/workspace.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"enav: rule-based analysis of building sensor data"};
  app.require_subcommand(1);

  std::string workspace = ".";
  std::string config;
  app.add_option("-w,--workspace", workspace, "Workspace root")->capture_default_str();
  app.add_option("-c,--config", config, "Config file (default: <workspace>/config.json)");

  std::vector<std::string> check_files;
  auto* check = app.add_subcommand("check", "Parse and analyse spec files");
  check->add_option("files", check_files, "Spec files (default: spec/*.afs)");

  std::string csv, mapping;
  bool markers = false;
  auto* import = app.add_subcommand("import", "Import a logger CSV export");
  import->add_option("csv", csv, "CSV file")->required();
  import->add_option("--map", mapping, "Point mapping JSON")->required();
  import->add_flag("--markers", markers, "File holds mode markers (timestamp,point,label)");

  std::string from, to;
  auto* run = app.add_subcommand("run", "Import pending files, preprocess, evaluate, update tickets");
  run->add_option("--from", from, "Range start")->required();
  run->add_option("--to", to, "Range end (exclusive)")->required();

  std::string report_id;
  auto* report = app.add_subcommand("report", "Render a report");
  report->add_option("id", report_id, "Report id (reports/<id>/template.json)")->required();
  report->add_option("--from", from, "Range start")->required();
  report->add_option("--to", to, "Range end (exclusive)")->required();

  std::string section, text, author;
  auto* comment = app.add_subcommand("comment", "Attach a comment to a report section");
  comment->add_option("report", report_id, "Report id")->required();
  comment->add_option("section", section, "Section id")->required();
  comment->add_option("--text", text, "Comment text")->required();
  comment->add_option("--author", author, "Author (default: $USER)");

  std::string series_id;
  auto* exp = app.add_subcommand("export", "Print a stored series as CSV");
  exp->add_option("id", series_id, "Sensor, instance or virtual sensor id")->required();
  exp->add_option("--from", from, "Range start")->required();
  exp->add_option("--to", to, "Range end (exclusive)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const fs::path root = workspace;
  const std::optional<fs::path> cfg = config.empty() ? std::nullopt : std::optional<fs::path>(config);
  auto& out = std::cout;
  auto& err = std::cerr;
  namespace ws = enav::ws;

  if (*check) {
    std::vector<fs::path> files(check_files.begin(), check_files.end());
    return ws::cmd_check(root, cfg, files, out, err);
  }
  if (*import) return ws::cmd_import(root, cfg, csv, mapping, markers, out, err);
  if (*run) return ws::cmd_run(root, cfg, from, to, out, err);
  if (*report) return ws::cmd_report(root, cfg, report_id, from, to, out, err);
  if (*comment) return ws::cmd_comment(root, cfg, report_id, section, author, text, out, err);
  if (*exp) return ws::cmd_export(root, cfg, series_id, from, to, out, err);
  return 2;
}
