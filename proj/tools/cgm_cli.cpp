#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>
#include <string>

#include "cgm/errors.hpp"
#include "cgm/flows.hpp"
#include "cgm/pipeline.hpp"

namespace {

struct CommonOpts {
  CLI::Option* seed = nullptr;
  CLI::Option* out = nullptr;
  CLI::Option* kind = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conformal generative modeling pipeline"};
  app.require_subcommand(1);

  std::string config_path, kind_name = "cnf", out_dir;
  std::uint64_t seed = 0;
  int mesh_id = 1, n = 1000, seeds = 0, holdout = 0;

  std::map<CLI::App*, CommonOpts> opts;
  auto add_common = [&](const std::string& name, const std::string& desc, bool with_kind) {
    CLI::App* cmd = app.add_subcommand(name, desc);
    CommonOpts& o = opts[cmd];
    cmd->add_option("--config", config_path, "pipeline config file")->required();
    o.seed = cmd->add_option("--seed", seed, "root seed override");
    o.out = cmd->add_option("--out", out_dir, "output directory override");
    if (with_kind)
      o.kind = cmd->add_option("--kind", kind_name, "model kind")
                   ->check(CLI::IsMember({"cnf", "moser"}));
    return cmd;
  };

  CLI::App* parameterize =
      add_common("parameterize", "conformally map each mesh to the unit sphere", false);
  CLI::App* align = add_common("align", "align parameterizations to the reference mesh", false);
  CLI::App* make_dataset =
      add_common("make-dataset", "sample the meshes and build sphere datasets", false);
  CLI::App* train = add_common("train", "train a generative model on the pooled dataset", true);
  CLI::App* sample = add_common("sample", "generate samples and map them onto a mesh", true);
  sample->add_option("--mesh-id", mesh_id, "target mesh id (1-based)");
  sample->add_option("--n", n, "number of samples");
  CLI::App* eval = add_common("eval", "evaluate corrected log likelihoods", true);
  eval->add_option("--seeds", seeds, "run a multi-seed retrain study with this many seeds");
  eval->add_option("--holdout", holdout, "held-out mesh id for the generalization harness");
  CLI::App* export_density =
      add_common("export-density", "write a mesh PLY colored by model density", true);
  export_density->add_option("--mesh-id", mesh_id, "target mesh id (1-based)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    cgm::PipelineConfig config = cgm::load_pipeline_config(config_path);
    const CommonOpts& o = opts.at(cmd);
    if (o.seed->count()) config.seed = seed;
    if (const char* env = std::getenv("CGM_OUTPUT_ROOT")) config.output_dir = env;
    if (o.out->count()) config.output_dir = out_dir;
    cgm::FlowKind kind = cgm::flow_kind_from_name(kind_name);

    if (cmd == parameterize) {
      cgm::cmd_parameterize(config, std::cout);
    } else if (cmd == align) {
      cgm::cmd_align(config, std::cout);
    } else if (cmd == make_dataset) {
      cgm::cmd_make_dataset(config, std::cout);
    } else if (cmd == train) {
      cgm::cmd_train(config, kind, std::cout);
    } else if (cmd == sample) {
      cgm::cmd_sample(config, kind, mesh_id, n, std::cout);
    } else if (cmd == eval) {
      if (holdout > 0) {
        cgm::run_holdout_study(config, kind, holdout, seeds > 0 ? seeds : 5, std::cout);
      } else if (seeds > 0) {
        cgm::run_seed_study(config, kind, seeds, std::cout);
      } else {
        cgm::cmd_eval(config, kind, std::cout);
      }
    } else if (cmd == export_density) {
      cgm::cmd_export_density(config, kind, mesh_id, std::cout);
    }
    return 0;
  } catch (const cgm::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
