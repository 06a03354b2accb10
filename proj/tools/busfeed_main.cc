// busfeed: GPS traces to an LSTM model and a GTFS feed.
#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "busfeed/pipeline.h"

namespace {

using busfeed::pipeline::Config;
namespace files = busfeed::pipeline::files;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<int> k, stride, epochs, batch, hidden;
  std::optional<double> lr;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "key=value config file");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--mode", o.mode, "regression or stop")
      ->check(CLI::IsMember({"regression", "stop"}));
  cmd->add_option("--k", o.k, "window length (k-1 inputs plus one label)");
  cmd->add_option("--stride", o.stride, "window stride");
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--batch", o.batch, "minibatch size");
  cmd->add_option("--hidden", o.hidden, "LSTM hidden size");
  cmd->add_option("--out", o.out, "output directory");
}

Config resolve(const Overrides& o) {
  Config cfg = o.config.empty() ? Config{} : Config::load(o.config);
  if (o.seed) cfg.set_seed(*o.seed);
  if (o.mode) cfg.mode = busfeed::nn::parse_mode(*o.mode);
  if (o.k) cfg.window.k = *o.k;
  if (o.stride) cfg.window.stride = *o.stride;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.lr) cfg.train.learning_rate = *o.lr;
  if (o.batch) cfg.train.batch_size = *o.batch;
  if (o.hidden) cfg.train.hidden_size = *o.hidden;
  if (o.out) cfg.out_dir = *o.out;
  cfg.window.validate();
  cfg.train.mode = cfg.mode;
  cfg.train.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"busfeed: bus GPS traces to next-position models and GTFS feeds"};
  app.require_subcommand(1);

  Overrides o;
  std::string feed_path;
  struct Command {
    const char* name;
    const char* help;
  };
  const std::vector<Command> commands = {
      {"simulate", "generate synthetic traces and ground truth"},
      {"clean", "drop duplicates and zero-speed glitches"},
      {"train", "train the LSTM"},
      {"evaluate", "held-out next-position RMSE"},
      {"predict", "stop predictions along the cleaned trace"},
      {"export-gtfs", "cluster stops, segment trips, write gtfs.zip"},
      {"validate-gtfs", "check a feed for structural errors"},
      {"pipeline", "run every stage in order"},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, o);
    if (std::string(c.name) == "validate-gtfs")
      sub->add_option("feed", feed_path, "feed zip or directory (default <out>/gtfs.zip)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "\n";
    app.exit(e);
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  const std::string command = app.get_subcommands().front()->get_name();
  namespace p = busfeed::pipeline;
  try {
    Config cfg = [&] {
      try {
        return resolve(o);
      } catch (const std::exception& e) {
        throw p::StageError("config", e.what());
      }
    }();

    if (command == "simulate") {
      p::simulate(cfg);
      p::write_manifest(cfg, command, {files::kRaw, files::kTruthStops, files::kTruthTrips});
    } else if (command == "clean") {
      p::clean(cfg);
      p::write_manifest(cfg, command, {files::kRaw, files::kCleaned, files::kCleaningReport});
    } else if (command == "train") {
      p::train(cfg);
      p::write_manifest(cfg, command, {files::kCleaned, files::kModel, files::kLossTrace});
    } else if (command == "evaluate") {
      p::evaluate(cfg);
      p::write_manifest(cfg, command,
                        {files::kCleaned, files::kModel, files::kEvaluation, files::kPredVsReal});
      std::cout << busfeed::text::read_file(p::path_in(cfg, files::kEvaluation));
    } else if (command == "predict") {
      p::predict(cfg);
      p::write_manifest(cfg, command,
                        {files::kCleaned, files::kModel, files::kPredictedStops, files::kStopErrors,
                         files::kRouteTrace});
    } else if (command == "export-gtfs") {
      p::export_gtfs(cfg);
      p::write_manifest(cfg, command, {files::kCleaned, files::kPredictedStops, files::kGtfs});
    } else if (command == "validate-gtfs") {
      const std::string feed = feed_path.empty() ? p::path_in(cfg, files::kGtfs) : feed_path;
      // A feed given on the command line gets its report on stdout only.
      const std::string report_path = feed_path.empty() ? p::path_in(cfg, files::kValidation) : "";
      auto report = p::validate_gtfs(feed, report_path);
      std::cout << report.render();
      return report.valid() ? 0 : 1;
    } else if (command == "pipeline") {
      const bool ok = p::run_all(cfg);
      std::cout << busfeed::text::read_file(p::path_in(cfg, files::kValidation));
      return ok ? 0 : 1;
    }
  } catch (const p::StageError& e) {
    std::cerr << "busfeed: stage failed: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "busfeed: " << command << " failed: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
