// Command-line front end. Every subcommand takes an optional key=value
// config file plus key=value overrides; the resolved settings are written
// next to the outputs.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mt6/mt6.h"

namespace {

int Report(mt6_status status) {
  std::fprintf(stderr, "error[%s]: %s\n", mt6_status_name(status), mt6_last_error());
  return static_cast<int>(status);
}

std::string Text(mt6_status (*fn)(const char*, char*, size_t, size_t*), const char* arg) {
  size_t len = 0;
  fn(arg, nullptr, 0, &len);
  std::string out(len + 1, '\0');
  if (fn(arg, out.data(), out.size(), &len) != MT6_OK) return "";
  out.resize(len);
  return out;
}

struct Invocation {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string seed;
  std::string threads;
  bool show_keys = false;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mt6: text-to-text pretraining laboratory", "mt6"};
  app.set_version_flag("--version", std::string(mt6_version()));
  app.require_subcommand(1);

  Invocation inv;
  std::vector<CLI::App*> subs;
  for (size_t i = 0; i < mt6_command_count(); ++i) {
    const char* name = mt6_command_name(i);
    CLI::App* sub = app.add_subcommand(name, std::string("run ") + name);
    sub->add_option("-c,--config", inv.config_file, "key=value config file");
    sub->add_option("--set", inv.overrides, "override, key=value (repeatable)");
    sub->add_option("--seed", inv.seed, "global seed");
    sub->add_option("--threads", inv.threads, "worker threads");
    sub->add_flag("--keys", inv.show_keys, "list accepted keys with defaults and exit");
    sub->add_option("overrides", inv.overrides, "key=value overrides");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error[invalid_argument]: %s\n", e.what());
    return static_cast<int>(MT6_ERR_INVALID_ARGUMENT);
  }

  std::string command;
  for (CLI::App* sub : subs) {
    if (sub->parsed()) command = sub->get_name();
  }

  if (inv.show_keys) {
    std::fputs(Text(mt6_command_help, command.c_str()).c_str(), stdout);
    return 0;
  }

  mt6_config* cfg = nullptr;
  mt6_status st = mt6_config_create(&cfg);
  if (st != MT6_OK) return Report(st);
  if (!inv.config_file.empty()) st = mt6_config_load_file(cfg, inv.config_file.c_str());
  for (size_t i = 0; st == MT6_OK && i < inv.overrides.size(); ++i) {
    st = mt6_config_apply_override(cfg, inv.overrides[i].c_str());
  }
  if (st == MT6_OK && !inv.seed.empty()) st = mt6_config_set(cfg, "seed", inv.seed.c_str());
  if (st == MT6_OK && !inv.threads.empty()) st = mt6_config_set(cfg, "threads", inv.threads.c_str());
  if (st == MT6_OK) st = mt6_run(command.c_str(), cfg);
  mt6_config_destroy(cfg);
  return st == MT6_OK ? 0 : Report(st);
}
