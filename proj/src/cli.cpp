#include "povmap/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "povmap/annotation_pipeline.hpp"
#include "povmap/centroid_grid.hpp"
#include "povmap/detection_eval.hpp"
#include "povmap/error.hpp"
#include "povmap/geo_formats.hpp"
#include "povmap/nightlight_labels.hpp"
#include "povmap/province_etl.hpp"
#include "povmap/random.hpp"
#include "povmap/regression.hpp"

namespace povmap::cli {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// File helpers

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return in;
}

template <typename Fn>
auto with_input(const std::string& path, Fn&& fn) {
  auto in = open_in(path);
  try {
    return fn(in);
  } catch (const ParseError& e) {
    throw InputError(path + ": " + e.what());
  }
}

TextTable read_table_file(const std::string& path) {
  return with_input(path, [](std::istream& in) { return parse_table(in); });
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& fn) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  fn(out);
  out.flush();
  if (!out) throw InputError("write failed for '" + path.string() + "'");
}

std::string stem_of(const std::string& image_id) {
  const auto stem = fs::path(image_id).stem().string();
  return stem.empty() ? image_id : stem;
}

struct Context {
  const Settings& settings;
  const PipelineConfig& config;
  std::ostream& out;
  std::ostream& err;
  bool dry_run = false;

  fs::path out_dir() const { return fs::path(config.out); }
  std::string path(const std::string& key) const { return settings.require(key); }
  void warn(const std::string& msg) const { err << "warning: " << msg << '\n'; }
};

// ---------------------------------------------------------------------------
// Subcommands

void cmd_centroids(const Context& ctx) {
  const auto vnl = with_input(ctx.path("vnl"), [](std::istream& in) { return parse_ascii_grid(in); });
  const auto pop = with_input(ctx.path("worldpop"), [](std::istream& in) { return parse_ascii_grid(in); });
  const auto aois = with_input(ctx.path("aois"), [](std::istream& in) { return parse_polygons(in); });

  CentroidOptions opt;
  opt.side_m = ctx.config.tile_side_m;
  opt.min_pop = ctx.config.min_pop;
  opt.threads = ctx.config.threads;
  const auto records = extract_centroids(vnl, pop, aois, opt);

  const auto schema = centroid_table_schema();
  const auto rows = centroid_rows(records);
  write_file(ctx.out_dir() / "centroids.tsv", [&](std::ostream& o) { write_table(o, schema, rows); });
  ctx.out << "centroids: " << records.size() << " records -> " << (ctx.out_dir() / "centroids.tsv").string() << '\n';
}

void cmd_nightlabels(const Context& ctx) {
  auto records = read_centroid_table(read_table_file(ctx.path("centroids")), ctx.config.tile_side_m);
  std::vector<double> sums;
  sums.reserve(records.size());
  for (const auto& r : records) sums.push_back(r.nightlight_sum);

  GmmOptions opt;
  opt.k = ctx.config.gmm_k;
  const auto fit = fit_gmm_1d(sums, opt);
  if (!fit.converged) ctx.warn("mixture fit stopped at max_iter without converging");
  label_centroids(records, fit.model);

  auto schema = centroid_table_schema();
  schema.push_back({"night_class", ColumnType::Integer});
  auto rows = centroid_rows(records);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].emplace_back(std::int64_t{*records[i].night_class});

  write_file(ctx.out_dir() / "labeled_centroids.tsv", [&](std::ostream& o) { write_table(o, schema, rows); });
  write_file(ctx.out_dir() / "gmm_model.txt", [&](std::ostream& o) { write_gmm(o, fit.model); });

  std::vector<std::size_t> per_class(static_cast<std::size_t>(fit.model.k), 0);
  for (const auto& r : records) ++per_class[static_cast<std::size_t>(*r.night_class)];
  ctx.out << "nightlabels: " << records.size() << " tiles, classes";
  for (auto c : per_class) ctx.out << ' ' << c;
  ctx.out << ", " << fit.iterations << " EM iterations\n";
}

struct LoadedAnnotations {
  std::map<std::string, std::vector<RawAnnotation>> by_image;
  std::map<std::string, ImageDims> dims;
  ClassMap class_map;
};

LoadedAnnotations load_annotations(const Context& ctx) {
  LoadedAnnotations a;
  const auto rows = with_input(ctx.path("annotations"), [](std::istream& in) { return parse_annotations(in); });
  a.dims = with_input(ctx.path("image_dims"), [](std::istream& in) { return parse_image_dims(in); });
  if (auto cm = ctx.settings.get("class_map"); cm && !cm->empty()) {
    a.class_map = with_input(*cm, [](std::istream& in) { return ClassMap::parse(in); });
  } else {
    a.class_map = ClassMap::xview_default();
  }
  std::set<std::string> missing;
  for (const auto& r : rows) {
    if (!a.dims.count(r.image_id)) missing.insert(r.image_id);
    a.by_image[r.image_id].push_back(r);
  }
  if (!missing.empty()) {
    std::string msg = "annotated images missing from the dimension registry:";
    for (const auto& m : missing) msg += " " + m;
    throw InputError(msg);
  }
  for (const auto& [id, _] : a.dims) a.by_image[id];
  return a;
}

struct ValidatedImage {
  std::string image_id;
  ImageDims dims;
  std::vector<GroupedAnnotation> annotations;
};

std::vector<ValidatedImage> validate_all(const LoadedAnnotations& a, std::vector<Row>* report) {
  std::vector<ValidatedImage> kept;
  for (const auto& [id, rows] : a.by_image) {
    const auto dims = a.dims.at(id);
    const auto result = validate_image(rows, dims, a.class_map);
    if (const auto* k = std::get_if<KeptImage>(&result)) {
      if (report) {
        report->push_back({id, std::string("kept"), std::int64_t(rows.size()), std::int64_t(k->incorrect),
                           std::int64_t(k->rejected), std::int64_t(k->annotations.size())});
      }
      kept.push_back({id, dims, k->annotations});
    } else {
      const auto& d = std::get<DroppedImage>(result);
      if (report) {
        report->push_back({id, std::string("dropped"), std::int64_t(rows.size()), std::int64_t(d.incorrect),
                           std::int64_t{0}, std::int64_t{0}});
      }
    }
  }
  return kept;
}

ClassCounts total_counts(const std::vector<ValidatedImage>& images) {
  ClassCounts total{};
  for (const auto& img : images) {
    const auto c = count_instances(img.annotations);
    for (int i = 0; i < kNumParentClasses; ++i) total[i] += c[i];
  }
  return total;
}

void cmd_annotations(const Context& ctx) {
  const auto loaded = load_annotations(ctx);
  std::vector<Row> report;
  const auto kept = validate_all(loaded, &report);

  const std::vector<Column> report_schema{{"image_id", ColumnType::Text},      {"status", ColumnType::Text},
                                          {"n_annotations", ColumnType::Integer}, {"n_incorrect", ColumnType::Integer},
                                          {"n_rejected", ColumnType::Integer},    {"n_kept", ColumnType::Integer}};
  write_file(ctx.out_dir() / "validation.tsv", [&](std::ostream& o) { write_table(o, report_schema, report); });

  for (const auto& img : kept) {
    write_file(ctx.out_dir() / "labels" / (stem_of(img.image_id) + ".txt"), [&](std::ostream& o) {
      for (const auto& a : img.annotations) {
        o << format_normalized(to_normalized(a.box, a.class_index, img.dims.width, img.dims.height)) << '\n';
      }
    });
  }

  const auto counts = total_counts(kept);
  const auto deficient = check_class_coverage(counts, ctx.config.min_instances);
  const std::set<int> deficient_set(deficient.begin(), deficient.end());
  std::vector<Row> count_rows;
  for (int c = 0; c < kNumParentClasses; ++c) {
    count_rows.push_back({std::int64_t{c}, std::string(kParentClassNames[c]), counts[c],
                          std::string(deficient_set.count(c) ? "yes" : "no")});
  }
  const std::vector<Column> count_schema{{"class_index", ColumnType::Integer},
                                         {"class_name", ColumnType::Text},
                                         {"count", ColumnType::Integer},
                                         {"deficient", ColumnType::Text}};
  write_file(ctx.out_dir() / "class_counts.tsv", [&](std::ostream& o) { write_table(o, count_schema, count_rows); });

  for (int c : deficient) {
    ctx.warn("class '" + std::string(kParentClassNames[c]) + "' has " + std::to_string(counts[c]) +
             " instances (< " + std::to_string(ctx.config.min_instances) + ")");
  }
  ctx.out << "annotations: " << kept.size() << " images kept, " << (report.size() - kept.size())
          << " dropped, " << deficient.size() << " deficient classes\n";
}

std::array<std::int64_t, kNumParentClasses> read_class_weights(const std::string& path) {
  const auto t = read_table_file(path);
  const auto ci = t.column("class_index");
  const auto wi = t.column("weight");
  std::array<std::int64_t, kNumParentClasses> w{};
  std::set<std::int64_t> seen;
  for (std::size_t r = 0; r < t.size(); ++r) {
    const auto c = t.integer(r, ci);
    const auto v = t.integer(r, wi);
    if (c < 0 || c >= kNumParentClasses || v < 0 || !seen.insert(c).second) {
      throw InputError(path + ": line " + std::to_string(t.line_of(r)) + ": bad class weight row");
    }
    w[static_cast<std::size_t>(c)] = v;
  }
  return w;
}

void cmd_sampler(const Context& ctx) {
  const auto loaded = load_annotations(ctx);
  const auto kept = validate_all(loaded, nullptr);

  std::array<std::int64_t, kNumParentClasses> weights{};
  if (auto wpath = ctx.settings.get("class_weights"); wpath && !wpath->empty()) {
    weights = read_class_weights(*wpath);
  } else {
    const auto cw = class_weights(total_counts(kept));
    for (const auto& w : cw.warnings) ctx.warn(w);
    weights = cw.weights;
  }

  std::vector<QuadrantTable> tables;
  std::vector<Row> quad_rows;
  for (const auto& img : kept) {
    tables.push_back(quadrant_table(img.image_id, img.annotations, weights, img.dims.width, img.dims.height));
    const auto rows = quadrant_rows(tables.back());
    quad_rows.insert(quad_rows.end(), rows.begin(), rows.end());
  }
  const auto schema = quadrant_table_schema();

  if (ctx.dry_run) {
    write_table(ctx.out, schema, quad_rows);
    return;
  }

  std::vector<Row> weight_rows;
  for (int c = 0; c < kNumParentClasses; ++c) {
    weight_rows.push_back({std::int64_t{c}, std::string(kParentClassNames[c]), weights[c]});
  }
  const std::vector<Column> weight_schema{
      {"class_index", ColumnType::Integer}, {"class_name", ColumnType::Text}, {"weight", ColumnType::Integer}};
  write_file(ctx.out_dir() / "class_weights.tsv", [&](std::ostream& o) { write_table(o, weight_schema, weight_rows); });
  write_file(ctx.out_dir() / "quadrants.tsv", [&](std::ostream& o) { write_table(o, schema, quad_rows); });

  const auto seed = ctx.config.require_seed();
  std::vector<Row> manifest;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto& img = kept[i];
    const auto& table = tables[i];
    if (std::all_of(table.begin(), table.end(), [](const QuadrantRecord& q) { return q.sum_w == 0; })) continue;
    if (ctx.config.chip_size > std::min(img.dims.width, img.dims.height)) {
      ctx.warn("image " + img.image_id + " smaller than chip size; skipped");
      continue;
    }
    Rng rng(stage_seed(seed, "sampler:" + img.image_id));
    for (int n = 0; n < ctx.config.chips_per_image; ++n) {
      const auto q = sample_quadrant(table, rng.uniform());
      const auto chip = sample_chip(img.dims, quadrant_rect(table[q]), ctx.config.chip_size, img.annotations, rng,
                                    ctx.config.clip_retention);
      std::ostringstream id;
      id << stem_of(img.image_id) << "_chip" << n;
      write_file(ctx.out_dir() / "chips" / (id.str() + ".txt"), [&](std::ostream& o) {
        for (const auto& b : chip.boxes) o << format_normalized(b) << '\n';
      });
      manifest.push_back({id.str(), img.image_id, std::int64_t{table[q].row_i}, std::int64_t{table[q].col_j},
                          std::int64_t{chip.x0}, std::int64_t{chip.y0}, std::int64_t{chip.size},
                          std::int64_t(chip.boxes.size())});
    }
  }
  const std::vector<Column> manifest_schema{
      {"chip_id", ColumnType::Text},     {"orig_filename", ColumnType::Text}, {"row_i", ColumnType::Integer},
      {"col_j", ColumnType::Integer},    {"x0", ColumnType::Integer},         {"y0", ColumnType::Integer},
      {"size", ColumnType::Integer},     {"n_boxes", ColumnType::Integer}};
  write_file(ctx.out_dir() / "chips" / "manifest.tsv",
             [&](std::ostream& o) { write_table(o, manifest_schema, manifest); });
  ctx.out << "sampler: " << kept.size() << " images, " << manifest.size() << " chips\n";
}

void cmd_eval_det(const Context& ctx) {
  const auto dets = read_detections(read_table_file(ctx.path("detections")));
  const auto gts = read_ground_truth(read_table_file(ctx.path("ground_truth")));
  const auto rep = evaluate(dets, gts, ctx.config.iou_threshold, ctx.config.conf_threshold);
  for (const auto& w : rep.warnings) ctx.warn(w);

  write_file(ctx.out_dir() / "eval_summary.txt", [&](std::ostream& o) { write_eval_summary(o, rep); });

  std::vector<Row> pr_rows;
  for (int c = 0; c < kNumParentClasses; ++c) {
    for (std::size_t i = 0; i < rep.pr50[c].size(); ++i) {
      pr_rows.push_back({std::int64_t{c}, std::int64_t(i + 1), rep.pr50[c][i].recall, rep.pr50[c][i].precision});
    }
  }
  const std::vector<Column> pr_schema{{"class_index", ColumnType::Integer},
                                      {"rank", ColumnType::Integer},
                                      {"recall", ColumnType::Real},
                                      {"precision", ColumnType::Real}};
  write_file(ctx.out_dir() / "pr_curves.tsv", [&](std::ostream& o) { write_table(o, pr_schema, pr_rows); });

  std::vector<Column> cm_schema{{"gt_class", ColumnType::Text}};
  for (int c = 0; c < kNumParentClasses; ++c) cm_schema.push_back({"pred_" + std::to_string(c), ColumnType::Integer});
  cm_schema.push_back({"pred_background", ColumnType::Integer});
  std::vector<Row> cm_rows;
  for (int r = 0; r <= kNumParentClasses; ++r) {
    Row row{r == kBackground ? std::string("background") : std::to_string(r)};
    for (auto v : rep.confusion[r]) row.emplace_back(v);
    cm_rows.push_back(std::move(row));
  }
  write_file(ctx.out_dir() / "confusion.tsv", [&](std::ostream& o) { write_table(o, cm_schema, cm_rows); });

  ctx.out << "eval-det: map50=" << format_real(rep.map50) << " map5095=" << format_real(rep.map5095) << '\n';
}

void cmd_etl(const Context& ctx) {
  const auto dets = read_detections(read_table_file(ctx.path("detections")));
  const auto image_geocodes = read_image_geocodes(read_table_file(ctx.path("image_geocodes")));
  const auto provinces = read_provinces(read_table_file(ctx.path("provinces")));
  const auto tiles = read_centroid_table(read_table_file(ctx.path("centroids")), ctx.config.tile_side_m);

  std::map<std::string, double> tile_pop;
  for (const auto& t : tiles) tile_pop[tile_id(t.row, t.col)] = t.population;

  std::map<std::string, std::vector<double>> pops_by_province;
  for (const auto& [image, code] : image_geocodes) {
    if (!provinces.count(code)) throw InputError("image " + image + " maps to unknown geocode '" + code + "'");
    const auto it = tile_pop.find(image);
    if (it == tile_pop.end()) throw InputError("image " + image + " is not a centroid tile (expected r<row>_c<col>)");
    pops_by_province[code].push_back(it->second);
  }

  const auto counts = aggregate_counts(dets, image_geocodes, ctx.config.conf_threshold);

  std::vector<Row> count_rows;
  std::vector<DetectorFeatureRow> features;
  for (const auto& [code, prov] : provinces) {
    const auto it = counts.find(code);
    const ClassCounts c = it == counts.end() ? ClassCounts{} : it->second;
    Row row{code};
    for (auto v : c) row.emplace_back(v);
    count_rows.push_back(std::move(row));

    const auto rel = relativize(c);
    const auto& pops = pops_by_province[code];
    features.push_back(detector_features(code, rel, pops, prov.population));
    if (rel.truck_fallback) ctx.warn("province " + code + " has no trucks; counts left absolute");
    if (features.back().no_tiles) ctx.warn("province " + code + " has no sampled tiles");
  }

  std::vector<Column> count_schema{{"geocode", ColumnType::Text}};
  for (int c = 0; c < kNumParentClasses; ++c) count_schema.push_back({"count_" + std::to_string(c), ColumnType::Integer});
  write_file(ctx.out_dir() / "province_counts.tsv", [&](std::ostream& o) { write_table(o, count_schema, count_rows); });
  const auto schema = detector_feature_schema();
  const auto rows = detector_feature_rows(features);
  write_file(ctx.out_dir() / "detector_features.tsv", [&](std::ostream& o) { write_table(o, schema, rows); });
  ctx.out << "etl: " << features.size() << " provinces at conf >= " << format_real(ctx.config.conf_threshold) << '\n';
}

void cmd_ensemble(const Context& ctx) {
  std::vector<FeatureTable> tables;
  for (const auto& p : split_on(ctx.path("features"), ',')) {
    const auto path = std::string(trim(p));
    if (path.empty()) continue;
    tables.push_back(read_feature_table(read_table_file(path)));
  }
  const auto provinces = read_provinces(read_table_file(ctx.path("provinces")));
  const auto data = concat_features(tables, provinces, ctx.config.permissive);
  for (const auto& w : data.warnings) ctx.warn(w);
  write_file(ctx.out_dir() / "ensemble.tsv", [&](std::ostream& o) { write_ensemble(o, data); });
  ctx.out << "ensemble: " << data.rows.size() << " rows x " << data.feature_names.size() << " features\n";
}

void cmd_split(const Context& ctx) {
  const auto provinces = read_provinces(read_table_file(ctx.path("provinces")));
  std::vector<std::string> codes;
  for (const auto& [code, _] : provinces) codes.push_back(code);
  const auto split = split_provinces(codes, ctx.config.test_fraction, stage_seed(ctx.config.require_seed(), "split"));

  std::vector<Row> rows;
  std::set<std::string> test(split.test.begin(), split.test.end());
  for (const auto& code : codes) rows.push_back({code, std::string(test.count(code) ? "test" : "train")});
  const std::vector<Column> schema{{"geocode", ColumnType::Text}, {"split", ColumnType::Text}};
  write_file(ctx.out_dir() / "split.tsv", [&](std::ostream& o) { write_table(o, schema, rows); });
  ctx.out << "split: " << split.train.size() << " train, " << split.test.size() << " test\n";
}

struct Design {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Design design_of(const EnsembleDataset& data, const std::set<std::string>* only) {
  std::vector<const EnsembleRow*> rows;
  for (const auto& r : data.rows) {
    if (!only || only->count(r.geocode)) rows.push_back(&r);
  }
  Design d;
  d.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(data.feature_names.size()));
  d.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i]->features.size(); ++j) {
      d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i]->features[j];
    }
    d.y(static_cast<Eigen::Index>(i)) = rows[i]->poverty_rate;
  }
  return d;
}

std::pair<std::set<std::string>, std::set<std::string>> read_split(const std::string& path) {
  const auto t = read_table_file(path);
  const auto gc = t.column("geocode");
  const auto sc = t.column("split");
  std::set<std::string> train;
  std::set<std::string> test;
  for (std::size_t r = 0; r < t.size(); ++r) {
    const auto& s = t.text(r, sc);
    if (s == "train") {
      train.insert(t.text(r, gc));
    } else if (s == "test") {
      test.insert(t.text(r, gc));
    } else {
      throw InputError(path + ": line " + std::to_string(t.line_of(r)) + ": split must be train or test");
    }
  }
  return {train, test};
}

void write_cv_metrics(std::ostream& o, const CvResult& cv) {
  o << "k=" << cv.fold_metrics.size() << '\n';
  o << "best_lambda=" << format_exact(cv.best_lambda) << '\n';
  o << "mean_r2=" << format_real(cv.mean_r2) << '\n';
  o << "mean_rmse=" << format_real(cv.mean_rmse) << '\n';
  for (std::size_t f = 0; f < cv.fold_metrics.size(); ++f) {
    o << "fold_" << f << "_n=" << cv.fold_metrics[f].n << '\n';
    o << "fold_" << f << "_r2=" << format_real(cv.fold_metrics[f].r_squared) << '\n';
    o << "fold_" << f << "_rmse=" << format_real(cv.fold_metrics[f].rmse) << '\n';
  }
  for (std::size_t l = 0; l < cv.lambda_grid.size(); ++l) {
    o << "lambda_" << l << '=' << format_exact(cv.lambda_grid[l]) << " mean_r2=" << format_real(cv.mean_r2_per_lambda[l])
      << '\n';
  }
}

void cmd_regress(const Context& ctx) {
  const auto data = read_ensemble(read_table_file(ctx.path("ensemble")));
  const auto [train, test] = read_split(ctx.path("split"));
  const auto tr = design_of(data, &train);
  const auto te = design_of(data, &test);
  if (te.X.rows() < 2) throw InputError("test split has fewer than 2 ensemble rows");

  double lambda = 0.0;
  std::optional<CvResult> cv;
  if (ctx.config.lambda) {
    lambda = *ctx.config.lambda;
  } else {
    cv = kfold_cv(tr.X, tr.y, ctx.config.cv_k, ctx.config.lambda_grid,
                  stage_seed(ctx.config.require_seed(), "regress"));
    lambda = cv->best_lambda;
  }
  const auto model = ridge_fit(tr.X, tr.y, lambda);
  const auto train_pred = predict(model, tr.X);
  const auto test_pred = predict(model, te.X);
  const double test_r2 = r_squared(te.y, test_pred);

  write_file(ctx.out_dir() / "ridge_model.txt", [&](std::ostream& o) { write_ridge_model(o, model); });
  write_file(ctx.out_dir() / "regress_metrics.txt", [&](std::ostream& o) {
    o << "lambda=" << format_exact(lambda) << '\n';
    o << "n_train=" << tr.X.rows() << '\n';
    o << "n_test=" << te.X.rows() << '\n';
    o << "train_r2=" << format_real(r_squared(tr.y, train_pred)) << '\n';
    o << "train_rmse=" << format_real(rmse(tr.y, train_pred)) << '\n';
    o << "test_r2=" << format_real(test_r2) << '\n';
    o << "test_rmse=" << format_real(rmse(te.y, test_pred)) << '\n';
    if (cv) o << "cv_mean_r2=" << format_real(cv->mean_r2) << '\n';
  });
  ctx.out << "regress: test r2=" << format_real(test_r2) << " (lambda=" << format_exact(lambda) << ")\n";
}

void cmd_cv(const Context& ctx) {
  const auto data = read_ensemble(read_table_file(ctx.path("ensemble")));
  std::optional<std::set<std::string>> train;
  if (auto sp = ctx.settings.get("split"); sp && !sp->empty()) train = read_split(*sp).first;
  const auto d = design_of(data, train ? &*train : nullptr);
  const auto cv = kfold_cv(d.X, d.y, ctx.config.cv_k, ctx.config.lambda_grid,
                           stage_seed(ctx.config.require_seed(), "cv"));
  write_file(ctx.out_dir() / "cv_metrics.txt", [&](std::ostream& o) { write_cv_metrics(o, cv); });
  ctx.out << "cv: mean r2=" << format_real(cv.mean_r2) << " (lambda=" << format_exact(cv.best_lambda)
          << ", k=" << ctx.config.cv_k << ")\n";
}

// ---------------------------------------------------------------------------
// Flag plumbing

struct FlagSet {
  std::deque<std::string> storage;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void add(CLI::App* app, const std::string& key, const std::string& help) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    storage.emplace_back();
    options.emplace_back(key, app->add_option(flag, storage.back(), help));
  }

  void collect(KeyValues& into) const {
    for (std::size_t i = 0; i < options.size(); ++i) {
      if (options[i].second->count() > 0) into[options[i].first] = storage[i];
    }
  }
};

struct Subcommand {
  std::string name;
  std::string help;
  std::vector<std::pair<std::string, std::string>> keys;
  void (*fn)(const Context&);
};

const std::vector<Subcommand>& subcommands() {
  static const std::vector<Subcommand> cmds = {
      {"centroids",
       "Extract the training-tile grid from nightlight and population rasters",
       {{"vnl", "nightlight raster (.asc)"},
        {"worldpop", "population raster (.asc)"},
        {"aois", "area-of-interest polygons"},
        {"tile_side_m", "tile side in meters"},
        {"min_pop", "minimum population per tile"}},
       cmd_centroids},
      {"nightlabels",
       "Fit a 1-D Gaussian mixture to tile nightlight sums and label tiles",
       {{"centroids", "centroid table"}, {"gmm_k", "mixture components"}},
       cmd_nightlabels},
      {"annotations",
       "Validate annotations, group classes and write normalized label files",
       {{"annotations", "annotation table"},
        {"image_dims", "image dimension table"},
        {"class_map", "child-to-parent class map (default: built-in xView grouping)"},
        {"min_instances", "minimum instances per class for the coverage check"}},
       cmd_annotations},
      {"sampler",
       "Build quadrant probability tables and sample weighted training chips",
       {{"annotations", "annotation table"},
        {"image_dims", "image dimension table"},
        {"class_map", "child-to-parent class map"},
        {"class_weights", "explicit class weights table (class_index, weight)"},
        {"chip_size", "chip side in pixels"},
        {"chips_per_image", "chips drawn per image"},
        {"clip_retention", "minimum retained area fraction for clipped boxes"}},
       cmd_sampler},
      {"eval-det",
       "Score detections against ground truth (mAP, PR curves, confusion matrix)",
       {{"detections", "detection table"},
        {"ground_truth", "ground-truth table"},
        {"iou_threshold", "IoU threshold for the confusion matrix"},
        {"conf_threshold", "confidence threshold for the confusion matrix"}},
       cmd_eval_det},
      {"etl",
       "Aggregate detections per province into truck-relative detector features",
       {{"detections", "detection table"},
        {"image_geocodes", "image to geocode table"},
        {"provinces", "province table"},
        {"centroids", "centroid table (tile populations)"},
        {"conf_threshold", "minimum detection confidence"}},
       cmd_etl},
      {"ensemble",
       "Join per-model feature tables into the ensemble dataset",
       {{"features", "comma-separated feature tables, in column order"},
        {"provinces", "province table"}},
       cmd_ensemble},
      {"split",
       "Seeded province train/test holdout split",
       {{"provinces", "province table"}, {"test_fraction", "fraction of provinces held out"}},
       cmd_split},
      {"regress",
       "Fit ridge regression on the training split and score the holdout",
       {{"ensemble", "ensemble dataset"},
        {"split", "split manifest"},
        {"lambda", "ridge penalty (default: chosen by CV on the training split)"},
        {"lambda_grid", "comma-separated lambda grid"},
        {"cv_k", "folds for lambda selection"}},
       cmd_regress},
      {"cv",
       "k-fold cross-validated ridge regression over a lambda grid",
       {{"ensemble", "ensemble dataset"},
        {"split", "optional split manifest; restricts CV to training provinces"},
        {"cv_k", "number of folds"},
        {"lambda_grid", "comma-separated lambda grid"}},
       cmd_cv},
  };
  return cmds;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, Settings::EnvLookup env) {
  CLI::App app{"Nightlight / object-count poverty mapping pipeline", "povmap"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  FlagSet global;
  app.add_option("--config", config_path, "key = value config file");
  global.add(&app, "seed", "random seed (required by sampler, split, cv)");
  global.add(&app, "threads", "worker threads");
  global.add(&app, "out", "output directory");

  bool dry_run = false;
  bool permissive = false;
  std::map<std::string, FlagSet> per_command;
  std::map<std::string, CLI::App*> apps;
  for (const auto& cmd : subcommands()) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    apps[cmd.name] = sub;
    auto& flags = per_command[cmd.name];
    for (const auto& [key, help] : cmd.keys) flags.add(sub, key, help);
    if (cmd.name == "sampler") sub->add_flag("--dry-run", dry_run, "print quadrant tables only");
    if (cmd.name == "ensemble") sub->add_flag("--permissive", permissive, "drop unmatched geocodes with a warning");
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    KeyValues flags;
    global.collect(flags);
    const Subcommand* chosen = nullptr;
    for (const auto& cmd : subcommands()) {
      if (apps[cmd.name]->parsed()) {
        chosen = &cmd;
        per_command[cmd.name].collect(flags);
      }
    }
    if (!chosen) throw InputError("no subcommand given");
    if (permissive) flags["permissive"] = "true";

    KeyValues file;
    if (!config_path.empty()) {
      file = with_input(config_path, [](std::istream& in) { return parse_config(in); });
    }
    const Settings settings(default_settings(), std::move(file), std::move(flags), std::move(env));
    const auto config = resolve_config(settings);
    const Context ctx{settings, config, out, err, dry_run};
    chosen->fn(ctx);
    return kExitOk;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternalError;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return run(args, out, err, [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  });
}

}  // namespace povmap::cli
