#include "damgan/commands.hpp"

#include "damgan/checkpoint.hpp"
#include "damgan/config.hpp"
#include "damgan/data.hpp"
#include "damgan/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <optional>

namespace damgan::cli {

namespace fs = std::filesystem;

namespace {

struct DataFlags {
  std::string config;
  std::string data_root;
  std::string manifest;

  void add(CLI::App& cmd) {
    cmd.add_option("--config", config, "Config file supplying [paths]");
    cmd.add_option("--data-root", data_root, "Dataset root (overrides the config)");
    cmd.add_option("--manifest", manifest, "Manifest file (default <data-root>/manifest.tsv)");
  }

  Paths resolve() const {
    Paths p = config.empty() ? Paths{} : load_config(config).paths;
    if (!data_root.empty()) p.data_root = data_root;
    if (!manifest.empty()) p.manifest = manifest;
    if (p.data_root.empty()) throw ConfigError("no dataset root: pass --data-root or a config with paths.data_root");
    return p;
  }
};

data::DatasetManifest read_manifest_checked(const Paths& p, Index resolution) {
  const fs::path file = p.manifest_or_default();
  if (!fs::exists(file)) throw std::runtime_error("manifest not found: " + file.string());
  return data::read_manifest(file, resolution);
}

metrics::MaskTag parse_mask_tag(const std::string& s) {
  if (s == "center") return metrics::MaskTag::center;
  if (s == "free") return metrics::MaskTag::free;
  throw std::invalid_argument("mask must be center or free, got '" + s + "'");
}

data::Mask mask_for(const train::TrainState& st, metrics::MaskTag tag, const std::string& id, std::uint64_t seed) {
  data::MaskSpec spec = st.config.mask_spec;
  spec.resolution = st.model.resolution;
  if (tag == metrics::MaskTag::center) {
    spec.mode = data::MaskMode::center;
  } else {
    spec.mode = data::MaskMode::free_form;
    spec.seed = train::image_seed(id, seed);
  }
  return data::make_mask(spec);
}

fs::path raw_report_path(const fs::path& out) {
  return out.parent_path() / (out.stem().string() + "_raw" + out.extension().string());
}

std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int cmd_prepare(const std::string& data_root, double val_fraction, std::uint64_t seed, std::string out_file,
                Index resolution, std::ostream& out, std::ostream& err) {
  const auto manifest = data::build_manifest(data_root, val_fraction, seed, resolution);
  if (out_file.empty()) out_file = (fs::path(data_root) / "manifest.tsv").string();
  data::write_manifest(out_file, manifest);
  for (const auto& s : manifest.skipped) err << "skipped unreadable image: " << s << "\n";
  out << "train=" << manifest.count(data::Split::train) << " val=" << manifest.count(data::Split::val) << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_file, const std::vector<std::string>& overrides,
              const std::string& resume, bool print_only, std::ostream& out) {
  RunConfig cfg = load_config(config_file);
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  if (print_only) {
    out << dump_config(cfg);
    return kExitOk;
  }
  if (cfg.paths.data_root.empty()) throw ConfigError("config key 'paths.data_root' is required for training");
  const auto manifest = read_manifest_checked(cfg.paths, cfg.model.resolution);

  train::RunOptions opts;
  opts.data_root = cfg.paths.data_root;
  opts.out_dir = cfg.paths.out_dir;
  if (!resume.empty()) opts.resume = resume;
  opts.on_eval = [&out](const std::string& line) { out << line << "\n" << std::flush; };
  const auto result = train::run_training(cfg.model, cfg.train, manifest, opts);
  out << "step=" << result.state.step << " log=" << result.log.generic_string();
  if (!result.checkpoint_steps.empty()) {
    out << " checkpoint=" << train::checkpoint_path(opts.out_dir, result.checkpoint_steps.back()).generic_string();
  }
  out << "\n";
  return kExitOk;
}

int cmd_eval(const DataFlags& flags, const std::string& ckpt, const std::string& mask, const std::string& out_file,
             std::optional<std::uint64_t> seed, std::ostream& out) {
  const auto tag = parse_mask_tag(mask);
  const auto st = checkpoint::load(ckpt);
  const Paths paths = flags.resolve();
  const auto manifest = read_manifest_checked(paths, st.model.resolution);
  if (manifest.count(data::Split::val) == 0) throw std::runtime_error("validation split is empty");
  const auto images = data::load_split(paths.data_root, manifest, data::Split::val);
  const auto reports = train::evaluate_model(st.model, st.generator, images, manifest.paths(data::Split::val), tag,
                                             st.config.mask_spec, seed.value_or(st.config.seed));
  if (fs::path(out_file).has_parent_path()) fs::create_directories(fs::path(out_file).parent_path());
  metrics::write_report_csv(out_file, reports.composited);
  metrics::write_report_csv(raw_report_path(out_file), reports.raw);
  out << "mask=" << mask << " images=" << reports.composited.rows.size()
      << " composited_psnr=" << format_g(reports.composited.mean_psnr)
      << " composited_ssim=" << format_g(reports.composited.mean_ssim)
      << " raw_psnr=" << format_g(reports.raw.mean_psnr) << " raw_ssim=" << format_g(reports.raw.mean_ssim) << "\n";
  return kExitOk;
}

int cmd_inpaint(const std::string& ckpt, const std::string& image_file, const std::string& mask_file,
                const std::string& mask, const std::string& out_dir, std::uint64_t seed, std::ostream& out) {
  const auto st = checkpoint::load(ckpt);
  const Index res = st.model.resolution;
  const auto image = data::load_image(image_file, res);
  data::Mask m;
  if (!mask_file.empty()) {
    m = data::load_mask(mask_file);
    if (m.shape().h != res || m.shape().w != res) {
      throw std::invalid_argument("mask file " + mask_file + " is " + std::to_string(m.shape().w) + "x" +
                                  std::to_string(m.shape().h) + ", expected " + std::to_string(res) + "x" +
                                  std::to_string(res));
    }
  } else {
    m = mask_for(st, parse_mask_tag(mask), fs::path(image_file).filename().string(), seed);
  }
  const auto masked = data::apply_mask(image, m);
  const auto gen = model::run_generator(st.model, st.generator, masked.generator_input);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  data::save_png(dir / "masked.png", masked.masked_image);
  data::save_png(dir / "raw.png", gen.final);
  data::save_png(dir / "composited.png", metrics::composite(image, gen.final, m));
  out << "wrote " << (dir / "masked.png").generic_string() << " " << (dir / "raw.png").generic_string() << " "
      << (dir / "composited.png").generic_string() << "\n";
  return kExitOk;
}

int cmd_grid(const DataFlags& flags, const std::string& ckpt, const std::vector<std::string>& ids,
             const std::string& mask, const std::string& out_file, std::optional<std::uint64_t> seed,
             std::ostream& out) {
  if (ids.empty()) throw std::invalid_argument("--ids needs at least one id");
  const auto tag = parse_mask_tag(mask);
  const auto st = checkpoint::load(ckpt);
  const Paths paths = flags.resolve();
  const auto manifest = read_manifest_checked(paths, st.model.resolution);
  std::vector<std::string> unknown;
  for (const auto& id : ids) {
    const bool found = std::any_of(manifest.entries.begin(), manifest.entries.end(),
                                   [&](const data::ManifestEntry& e) { return e.path == id; });
    if (!found) unknown.push_back(id);
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
    throw std::invalid_argument("unknown ids: " + list);
  }

  // Columns: ground truth | masked input | composited output.
  const Index res = st.model.resolution;
  const Index rows = Index(ids.size());
  data::ImageTensor grid({1, 3, rows * res, 3 * res});
  for (Index r = 0; r < rows; ++r) {
    const auto& id = ids[std::size_t(r)];
    const auto image = data::load_image(paths.data_root / id, res);
    const auto m = mask_for(st, tag, id, seed.value_or(st.config.seed));
    const auto masked = data::apply_mask(image, m);
    const auto gen = model::run_generator(st.model, st.generator, masked.generator_input);
    const data::ImageTensor cells[3] = {image, masked.masked_image, metrics::composite(image, gen.final, m)};
    for (Index col = 0; col < 3; ++col)
      for (Index c = 0; c < 3; ++c)
        for (Index y = 0; y < res; ++y)
          for (Index x = 0; x < res; ++x) grid(0, c, r * res + y, col * res + x) = cells[col](0, c, y, x);
  }
  if (fs::path(out_file).has_parent_path()) fs::create_directories(fs::path(out_file).parent_path());
  data::save_png(out_file, grid);
  out << "wrote " << out_file << " (" << rows << "x3)\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"DAM-GAN image inpainting: prepare data, train, evaluate, inpaint", "damgan"};
  app.require_subcommand(1);

  std::string data_root, prepare_out;
  double val_fraction = 0.1;
  std::uint64_t prepare_seed = 0;
  Index resolution = 128;
  auto* prepare = app.add_subcommand("prepare", "Scan a dataset and write a train/val manifest");
  prepare->add_option("--data-root", data_root, "Directory of PNG/JPEG images")->required();
  prepare->add_option("--val-fraction", val_fraction, "Fraction of images assigned to val")->capture_default_str();
  prepare->add_option("--seed", prepare_seed, "Split seed")->capture_default_str();
  prepare->add_option("--out", prepare_out, "Manifest path (default <data-root>/manifest.tsv)");
  prepare->add_option("--resolution", resolution, "Resolution used for the decode check")->capture_default_str();

  std::string config_file, resume;
  std::vector<std::string> overrides;
  bool print_config = false;
  auto* trainc = app.add_subcommand("train", "Train from a config file");
  trainc->add_option("--config", config_file, "INI-style config")->required();
  trainc->add_option("--resume", resume, "Checkpoint to continue from");
  trainc->add_option("--set", overrides, "Override a config value, section.key=value (repeatable)");
  trainc->add_flag("--print-config", print_config, "Print the merged config and exit");

  DataFlags eval_data, grid_data;
  std::string ckpt, mask = "center", out_file;
  std::optional<std::uint64_t> seed;
  auto* evalc = app.add_subcommand("eval", "Score a checkpoint on the val split");
  evalc->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  evalc->add_option("--mask", mask, "center or free")->capture_default_str();
  evalc->add_option("--out", out_file, "Composited report CSV; the raw report goes to <stem>_raw.csv")->required();
  evalc->add_option("--seed", seed, "Mask seed for free masks (default: the training seed)");
  eval_data.add(*evalc);

  std::string image_file, mask_file, inpaint_out;
  std::uint64_t inpaint_seed = 0;
  auto* inpaint = app.add_subcommand("inpaint", "Fill the hole in one image");
  inpaint->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  inpaint->add_option("--image", image_file, "Input image")->required();
  auto* mf = inpaint->add_option("--mask-file", mask_file, "Mask image, white = missing, model resolution");
  inpaint->add_option("--mask", mask, "center or free when no mask file is given")->excludes(mf);
  inpaint->add_option("--seed", inpaint_seed, "Seed for --mask free")->capture_default_str();
  inpaint->add_option("--out", inpaint_out, "Output directory for masked/raw/composited PNGs")->required();

  std::vector<std::string> ids;
  std::string grid_out;
  auto* gridc = app.add_subcommand("grid", "Rows of ground truth | input | output for chosen images");
  gridc->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  gridc->add_option("--ids", ids, "Manifest paths, comma separated")->required()->delimiter(',');
  gridc->add_option("--mask", mask, "center or free")->capture_default_str();
  gridc->add_option("--seed", seed, "Mask seed for free masks");
  gridc->add_option("--out", grid_out, "Output PNG")->required();
  grid_data.add(*gridc);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*prepare) return cmd_prepare(data_root, val_fraction, prepare_seed, prepare_out, resolution, out, err);
    if (*trainc) return cmd_train(config_file, overrides, resume, print_config, out);
    if (*evalc) return cmd_eval(eval_data, ckpt, mask, out_file, seed, out);
    if (*inpaint) return cmd_inpaint(ckpt, image_file, mask_file, mask, inpaint_out, inpaint_seed, out);
    if (*gridc) return cmd_grid(grid_data, ckpt, ids, mask, grid_out, seed, out);
  } catch (const train::NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace damgan::cli
