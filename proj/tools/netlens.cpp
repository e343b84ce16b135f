#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "netlens/classify.hpp"
#include "netlens/errors.hpp"
#include "netlens/io_util.hpp"
#include "netlens/network.hpp"
#include "netlens/npy.hpp"
#include "netlens/prng.hpp"
#include "netlens/relevance.hpp"
#include "netlens/robustness.hpp"
#include "netlens/spectra.hpp"
#include "netlens/synthetic.hpp"
#include "netlens/xai_metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace netlens;

namespace {

struct ImageFile {
    std::string id;
    fs::path path;
};

std::vector<ImageFile> list_npy(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw IoError(dir.string() + ": not a directory");
    std::vector<ImageFile> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".npy") continue;
        files.push_back({entry.path().stem().string(), entry.path()});
    }
    std::sort(files.begin(), files.end(),
              [](const ImageFile& a, const ImageFile& b) { return a.id < b.id; });
    if (files.empty())
        throw ContractError(dir.string() + ": no .npy files found");
    return files;
}

Tensor load_image(const fs::path& path) {
    Tensor img = read_npy(path);
    if (img.shape.size() != 3)
        throw ContractError(path.string() + ": image must be (C,H,W), got " +
                            shape_to_string(img.shape));
    for (float v : img.data)
        if (!(v >= 0.0f && v <= 1.0f))
            throw ContractError(path.string() + ": pixel outside [0,1]");
    img.layout = Layout::Chw;
    return img;
}

void write_json_file(const fs::path& path, const json& doc) {
    atomic_write_file(path, doc.dump(2) + "\n");
}

// Every run drops a manifest beside its outputs: inputs, seed and parameter
// table versions, so any result names what produced it.
void write_run_manifest(const fs::path& out_dir, const std::string& command,
                        const json& args, std::uint64_t seed) {
    json doc;
    doc["command"] = command;
    doc["args"] = args;
    doc["seed"] = seed;
    doc["toolkit_version"] = kToolkitVersion;
    doc["distortion_table_version"] = kDistortionTableVersion;
    write_json_file(out_dir / "run_manifest.json", doc);
}

std::vector<std::string> split_csv_flag(const std::string& csv) {
    std::vector<std::string> out;
    for (const std::string& tok : csv_split(csv))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

std::set<int> parse_grade_set(const std::string& csv) {
    std::set<int> grades;
    for (const std::string& tok : split_csv_flag(csv)) grades.insert(std::stoi(tok));
    return grades;
}

// ---------------------------------------------------------------------------
// fixtures

int cmd_fixtures(std::uint64_t seed, const std::string& out, std::size_t depth,
                 const std::string& channels_csv, const std::string& input_csv,
                 std::size_t classes, bool zero_bias, std::size_t n_images) {
    SyntheticNetOptions opts;
    opts.seed = seed;
    opts.depth = depth;
    opts.classes = classes;
    opts.zero_bias = zero_bias;
    opts.channels.clear();
    for (const std::string& tok : split_csv_flag(channels_csv))
        opts.channels.push_back(std::stoul(tok));
    opts.input_shape.clear();
    for (const std::string& tok : split_csv_flag(input_csv))
        opts.input_shape.push_back(std::stoul(tok));

    fs::path root(out);
    write_synthetic_network(opts, root / "net");

    const std::size_t h = opts.input_shape[1], w = opts.input_shape[2];
    json mask_index;
    std::string labels_csv = "image_id,grade\n";
    SplitMix64 label_rng(derive_seed(seed, 0x1abe1));
    for (std::size_t i = 0; i < n_images; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "img%03zu", i);
        std::string id(buf);
        Tensor img = make_synthetic_image(derive_seed(derive_seed(seed, 0x1fa9e), i),
                                          opts.input_shape);
        write_npy(img, root / "images" / (id + ".npy"));
        labels_csv += id + "," + std::to_string(label_rng.next_u64() % 5) + "\n";

        std::vector<SegmentationMask> lesions;
        json per_image;
        for (std::size_t l = 0; l + 1 < kLesionKinds.size(); ++l) {
            const std::string& lesion = kLesionKinds[l];
            Tensor m = make_synthetic_mask(
                derive_seed(derive_seed(derive_seed(seed, 0xda5c), i), l), h, w);
            std::string fname = id + "_" + lesion + ".npy";
            write_npy(m, root / "masks" / fname);
            per_image[lesion] = fname;
            lesions.push_back(mask_from_tensor(m, id, lesion));
        }
        SegmentationMask total = combine_total(lesions);
        Tensor total_t({h, w});
        for (std::size_t j = 0; j < total.grid.size(); ++j)
            total_t.data[j] = static_cast<float>(total.grid[j]);
        std::string fname = id + "_total.npy";
        write_npy(total_t, root / "masks" / fname);
        per_image["total"] = fname;
        mask_index[id] = per_image;
    }
    atomic_write_file(root / "labels.csv", labels_csv);
    write_json_file(root / "masks" / "index.json", mask_index);

    json args = {{"out", out},
                 {"depth", depth},
                 {"channels", channels_csv},
                 {"input", input_csv},
                 {"classes", classes},
                 {"zero_bias", zero_bias},
                 {"images", n_images}};
    write_run_manifest(root, "fixtures", args, seed);
    return 0;
}

// ---------------------------------------------------------------------------
// infer

int cmd_infer(const std::string& net_path, const std::string& images_dir,
              const std::string& labels_path, const std::string& out) {
    NetworkSpec net = load_network(net_path);
    std::vector<ImageFile> files = list_npy(images_dir);

    std::map<std::string, int> labels;
    {
        std::string text = read_text_file(labels_path);
        std::istringstream ss(text);
        std::string line;
        if (!std::getline(ss, line) || csv_split(line) != std::vector<std::string>{"image_id", "grade"})
            throw FormatError(labels_path + ": header must be 'image_id,grade'");
        while (std::getline(ss, line)) {
            if (line.empty()) continue;
            auto f = csv_split(line);
            if (f.size() != 2)
                throw FormatError(labels_path + ": expected 2 fields per row");
            labels[f[0]] = std::stoi(f[1]);
        }
    }

    std::vector<std::string> rows(files.size());
    parallel_for(files.size(), [&](std::size_t i) {
        Tensor img = load_image(files[i].path);
        Tensor batch = img;
        batch.shape.insert(batch.shape.begin(), 1);
        ForwardResult r = forward(net, batch, false);
        std::vector<double> logits(r.logits.data.begin(), r.logits.data.end());
        std::vector<double> probs = softmax(logits);
        auto it = labels.find(files[i].id);
        if (it == labels.end())
            throw ContractError(labels_path + ": no grade for image '" + files[i].id + "'");
        std::vector<std::string> fields = {files[i].id};
        for (double p : probs) fields.push_back(format_double(p));
        fields.push_back(std::to_string(it->second));
        rows[i] = csv_join(fields);
    });

    std::string csv = "image_id,p0,p1,p2,p3,p4,grade\n";
    for (const std::string& row : rows) csv += row + "\n";
    fs::path root(out);
    atomic_write_file(root / "predictions.csv", csv);
    json args = {{"net", net_path}, {"images", images_dir}, {"labels", labels_path}, {"out", out}};
    write_run_manifest(root, "infer", args, 0);
    return 0;
}

// ---------------------------------------------------------------------------
// explain

int cmd_explain(const std::string& net_path, const std::string& images_dir,
                std::size_t target, const std::string& seed_mode_name,
                const std::string& out) {
    NetworkSpec net = load_network(net_path);
    std::vector<ImageFile> files = list_npy(images_dir);
    SeedMode mode;
    if (seed_mode_name == "logit")
        mode = SeedMode::Logit;
    else if (seed_mode_name == "unit")
        mode = SeedMode::Unit;
    else
        throw ContractError("--seed-mode must be 'logit' or 'unit'");

    fs::path root(out);
    parallel_for(files.size(), [&](std::size_t i) {
        Tensor img = load_image(files[i].path);
        RelevanceMap map = explain(net, img, target, mode);
        write_npy(map.input_relevance, root / (files[i].id + ".npy"));
        json side;
        side["target_class"] = map.target_class;
        side["seed_mode"] = seed_mode_name;
        side["seed_value"] = map.seed_value;
        side["conservation_gap"] = map.conservation_gap;
        side["conservation_break"] = map.conservation_break;
        write_json_file(root / (files[i].id + ".json"), side);
    });
    json args = {{"net", net_path},
                 {"images", images_dir},
                 {"target", target},
                 {"seed_mode", seed_mode_name},
                 {"out", out}};
    write_run_manifest(root, "explain", args, 0);
    return 0;
}

// ---------------------------------------------------------------------------
// spectra

int cmd_spectra(const std::string& net_path, const std::string& images_dir,
                const std::string& out, bool uncentered, const std::string& layers_csv,
                std::size_t bins) {
    NetworkSpec net = load_network(net_path);
    std::vector<ImageFile> files = list_npy(images_dir);

    // one batch over the whole image set
    std::vector<std::size_t> batch_shape = net.input_shape;
    batch_shape.insert(batch_shape.begin(), files.size());
    Tensor batch(batch_shape, Layout::Nchw);
    std::size_t stride = shape_product(net.input_shape);
    for (std::size_t i = 0; i < files.size(); ++i) {
        Tensor img = load_image(files[i].path);
        if (img.shape != net.input_shape)
            throw ContractError(files[i].path.string() + ": image shape " +
                                shape_to_string(img.shape) + " does not match network input");
        std::copy(img.data.begin(), img.data.end(), batch.data.begin() + i * stride);
    }
    ForwardResult fwd = forward(net, batch, true);
    const ActivationTrace& trace = *fwd.trace;

    std::vector<std::string> selected;
    if (layers_csv == "all") {
        for (const LayerSpec& l : net.layers)
            if (l.kind != LayerKind::SoftmaxHead) selected.push_back(l.name);
    } else {
        selected = split_csv_flag(layers_csv);
        for (const std::string& name : selected)
            if (!net.find(name))
                throw ContractError("spectra: no layer named '" + name + "'");
    }

    fs::path root(out);
    json layers_json = json::array();
    std::string kappa_csv = "layer_index,layer,kappa\n";
    for (const std::string& name : selected) {
        json jl;
        jl["layer"] = name;
        EigenSpectrum spec;
        try {
            spec = spectrum_of(trace, name, !uncentered);
        } catch (const ContractError& e) {
            // e.g. a dense layer with a single observation row
            jl["error"] = e.what();
            layers_json.push_back(jl);
            continue;
        }
        jl["d"] = spec.d;
        jl["m"] = spec.m;

        Tensor eig_t({spec.eigenvalues.size()});
        for (std::size_t i = 0; i < spec.eigenvalues.size(); ++i)
            eig_t.data[i] = static_cast<float>(spec.eigenvalues[i]);
        std::string eig_name = "eigs/" + name + ".npy";
        write_npy(eig_t, root / eig_name);
        jl["eigenvalues_path"] = eig_name;

        try {
            double kappa = condition_number(spec);
            jl["kappa"] = kappa;
            kappa_csv += std::to_string(net.index_of(name)) + "," + name + "," +
                         format_double(kappa) + "\n";
        } catch (const DegenerateSpectrumError& e) {
            jl["kappa"] = nullptr;
            jl["kappa_error"] = e.what();
        }

        try {
            ParetoFit fit = fit_pareto(spec.eigenvalues);
            jl["pareto"] = {{"alpha", fit.alpha}, {"xm", fit.xm}, {"ks", fit.ks_statistic},
                            {"n", fit.n}};
        } catch (const ContractError& e) {
            jl["pareto"] = nullptr;
            jl["pareto_error"] = e.what();
        }
        try {
            FitReport report = fit_best_distribution(spec.eigenvalues);
            const FamilyFit& best = report.best();
            jl["best_fit"] = {{"family", best.family},
                              {"params", best.params},
                              {"ks", best.ks_statistic},
                              {"low_confidence", report.low_confidence}};
        } catch (const ContractError& e) {
            jl["best_fit"] = nullptr;
            jl["best_fit_error"] = e.what();
        }
        if (bins >= 2) {
            jl["density"] = {{"bins", bins},
                             {"masses", symmetrize_density(spec, bins)}};
        }
        layers_json.push_back(jl);
    }

    json doc;
    doc["layers"] = layers_json;
    doc["centered"] = !uncentered;
    doc["n_images"] = files.size();
    write_json_file(root / "spectra.json", doc);
    atomic_write_file(root / "kappa.csv", kappa_csv);
    json args = {{"net", net_path}, {"images", images_dir}, {"out", out},
                 {"uncentered", uncentered}, {"layers", layers_csv}, {"bins", bins}};
    write_run_manifest(root, "spectra", args, 0);
    return 0;
}

// ---------------------------------------------------------------------------
// xai-eval

int cmd_xai_eval(const std::string& heatmaps_dir, const std::string& masks_index,
                 const std::string& poolings_csv, const std::string& lesions_csv,
                 const std::string& method, std::size_t random_trials, std::uint64_t seed,
                 const std::string& out) {
    std::vector<ImageFile> files = list_npy(heatmaps_dir);
    std::vector<std::pair<std::string, Tensor>> heatmaps;
    for (const ImageFile& f : files) {
        Tensor t = read_npy(f.path);
        if (t.shape.size() != 3)
            throw ContractError(f.path.string() + ": heatmap must be (C,H,W)");
        heatmaps.emplace_back(f.id, std::move(t));
    }

    fs::path index_path(masks_index);
    json index;
    try {
        index = json::parse(read_text_file(index_path));
    } catch (const json::exception& e) {
        throw FormatError(index_path.string() + ": invalid JSON: " + e.what());
    }
    fs::path mask_dir = index_path.parent_path();

    std::map<std::string, std::map<std::string, SegmentationMask>> masks;
    for (const auto& [id, lesions] : index.items()) {
        std::vector<SegmentationMask> present;
        for (const auto& [lesion, file] : lesions.items()) {
            Tensor t = read_npy(mask_dir / file.get<std::string>());
            SegmentationMask m = mask_from_tensor(t, id, lesion);
            if (lesion != "total") present.push_back(m);
            masks[id][lesion] = std::move(m);
        }
        if (!present.empty()) {
            SegmentationMask computed = combine_total(present);
            auto it = masks[id].find("total");
            if (it == masks[id].end()) {
                masks[id]["total"] = computed;
            } else if (it->second.grid != computed.grid) {
                throw ContractError(id + ": total mask is not the OR of the lesion masks");
            }
        }
    }

    std::vector<Pooling> poolings;
    for (const std::string& p : split_csv_flag(poolings_csv))
        poolings.push_back(pooling_from_name(p));
    std::vector<std::string> lesions = split_csv_flag(lesions_csv);

    XaiScoreTable table = score_set(heatmaps, masks, poolings, lesions, method);

    if (random_trials > 0) {
        // Gaussian control: seeded noise heatmaps in place of explanations
        for (const std::string& lesion : lesions) {
            for (Pooling pooling : poolings) {
                std::vector<double> rmas, rras;
                std::size_t excluded = 0;
                for (std::size_t i = 0; i < heatmaps.size(); ++i) {
                    const auto& [id, heat] = heatmaps[i];
                    const SegmentationMask& mask = masks.at(id).at(lesion);
                    std::uint64_t s = derive_seed(derive_seed(seed, 0xc0de), i);
                    BaselineStats stats =
                        random_baseline(mask, pooling, heat.shape[0], random_trials, s);
                    rmas.push_back(stats.rma_mean);
                    rras.push_back(stats.rra_mean);
                    excluded += stats.trials_excluded;
                }
                auto push = [&](const std::string& metric, const std::vector<double>& scores) {
                    XaiScoreRow row;
                    row.lesion = lesion;
                    row.method = "random";
                    row.pooling = pooling;
                    row.metric = metric;
                    row.mean = mean_of(scores);
                    row.median = median_of(std::vector<double>(scores));
                    row.n_used = scores.size();
                    row.n_excluded = excluded;
                    table.rows.push_back(std::move(row));
                };
                push("RMA", rmas);
                push("RRA", rras);
            }
        }
    }

    std::string csv = "lesion,method,pooling,metric,mean,median,n_used,n_excluded\n";
    json rows_json = json::array();
    for (const XaiScoreRow& row : table.rows) {
        csv += csv_join({row.lesion, row.method, pooling_name(row.pooling), row.metric,
                         format_double(row.mean), format_double(row.median),
                         std::to_string(row.n_used), std::to_string(row.n_excluded)}) +
               "\n";
        rows_json.push_back({{"lesion", row.lesion},
                             {"method", row.method},
                             {"pooling", pooling_name(row.pooling)},
                             {"metric", row.metric},
                             {"mean", row.mean},
                             {"median", row.median},
                             {"n_used", row.n_used},
                             {"n_excluded", row.n_excluded}});
    }
    fs::path root(out);
    atomic_write_file(root / "scores.csv", csv);
    write_json_file(root / "scores.json", json{{"rows", rows_json}});
    json args = {{"heatmaps", heatmaps_dir}, {"masks", masks_index},
                 {"pooling", poolings_csv},  {"lesions", lesions_csv},
                 {"method", method},         {"random_trials", random_trials},
                 {"out", out}};
    write_run_manifest(root, "xai-eval", args, seed);
    return 0;
}

// ---------------------------------------------------------------------------
// distort

int cmd_distort(const std::string& images_dir, const std::string& kinds_csv,
                const std::string& severities_csv, std::uint64_t seed,
                const std::string& out) {
    std::vector<ImageFile> files = list_npy(images_dir);
    std::vector<DistortionKind> kinds;
    for (const std::string& k : split_csv_flag(kinds_csv))
        kinds.push_back(distortion_from_name(k));
    std::vector<int> severities;
    for (const std::string& s : split_csv_flag(severities_csv))
        severities.push_back(std::stoi(s));

    fs::path root(out);
    for (DistortionKind kind : kinds)
        for (int severity : severities) {
            fs::path dir = root / distortion_name(kind) / ("s" + std::to_string(severity));
            parallel_for(files.size(), [&](std::size_t i) {
                Tensor img = load_image(files[i].path);
                std::uint64_t s = seed;
                s = derive_seed(s, i);
                s = derive_seed(s, static_cast<std::uint64_t>(kind) + 0x100);
                s = derive_seed(s, static_cast<std::uint64_t>(severity));
                Tensor distorted = apply_distortion(img, {kind, severity, s});
                write_npy(distorted, dir / (files[i].id + ".npy"));
            });
        }
    json args = {{"images", images_dir}, {"kinds", kinds_csv},
                 {"severities", severities_csv}, {"out", out}};
    write_run_manifest(root, "distort", args, seed);
    return 0;
}

// ---------------------------------------------------------------------------
// robustness

int cmd_robustness(const std::string& net_a_path, const std::string& net_b_path,
                   const std::string& images_dir, const std::string& kinds_csv,
                   const std::string& severities_csv, std::uint64_t seed,
                   const std::string& healthy_csv, const std::string& out) {
    NetworkSpec net_a = load_network(net_a_path);
    NetworkSpec net_b = load_network(net_b_path);
    std::vector<ImageFile> files = list_npy(images_dir);
    std::vector<Tensor> images;
    for (const ImageFile& f : files) images.push_back(load_image(f.path));

    std::vector<DistortionKind> kinds;
    for (const std::string& k : split_csv_flag(kinds_csv))
        kinds.push_back(distortion_from_name(k));
    std::vector<int> severities;
    for (const std::string& s : split_csv_flag(severities_csv))
        severities.push_back(std::stoi(s));

    RobustnessGrid grid = softmax_delta_grid(net_a, net_b, images, kinds, severities, seed,
                                             parse_grade_set(healthy_csv));
    grid.model_a = net_a_path;
    grid.model_b = net_b_path;

    std::string csv = "kind,severity,mean_delta,n\n";
    json cells = json::array();
    for (const RobustnessCell& cell : grid.cells) {
        csv += csv_join({distortion_name(cell.kind), std::to_string(cell.severity),
                         format_double(cell.mean_delta), std::to_string(cell.n)}) +
               "\n";
        cells.push_back({{"kind", distortion_name(cell.kind)},
                         {"severity", cell.severity},
                         {"mean_delta", cell.mean_delta},
                         {"n", cell.n}});
    }
    fs::path root(out);
    atomic_write_file(root / "robustness.csv", csv);
    write_json_file(root / "robustness.json",
                    json{{"model_a", grid.model_a}, {"model_b", grid.model_b},
                         {"cells", cells}});
    json args = {{"net_a", net_a_path}, {"net_b", net_b_path}, {"images", images_dir},
                 {"kinds", kinds_csv},  {"severities", severities_csv},
                 {"healthy_grades", healthy_csv}, {"out", out}};
    write_run_manifest(root, "robustness", args, seed);
    return 0;
}

// ---------------------------------------------------------------------------
// auc

int cmd_auc(const std::string& pred_path, const std::string& healthy_csv,
            const std::string& out) {
    std::set<int> healthy = parse_grade_set(healthy_csv);
    std::vector<PredictionRecord> records = read_predictions_csv(pred_path, healthy);
    std::vector<double> scores;
    std::vector<int> labels;
    for (const PredictionRecord& r : records) {
        scores.push_back(r.disease_score);
        labels.push_back(r.label);
    }
    AucResult result = auc(scores, labels);
    json doc = {{"auc", result.auc}, {"n_pos", result.n_pos}, {"n_neg", result.n_neg}};
    std::cout << doc.dump(2) << "\n";
    if (!out.empty()) {
        fs::path root(out);
        write_json_file(root / "auc.json", doc);
        json args = {{"pred", pred_path}, {"healthy_grades", healthy_csv}, {"out", out}};
        write_run_manifest(root, "auc", args, 0);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"netlens: diagnostics for small convolutional classifiers - activation "
                 "spectra, LRP heatmap scoring, distortion robustness and referable-disease "
                 "AUC"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolkitVersion));

    std::uint64_t seed = 0;
    std::string out, net_path, net_b_path, images_dir, labels_path, heatmaps_dir, masks_index,
        pred_path;
    std::string channels_csv = "4,8,5", input_csv = "3,16,16";
    std::string kinds_csv =
        "gaussian_noise,shot_noise,impulse_noise,gaussian_blur,pixelate,contrast,brightness,"
        "saturate";
    std::string severities_csv = "1,2,3,4,5";
    std::string poolings_csv = "sum_pos,l2_norm_sq";
    std::string lesions_csv = "microaneurysms,haemorrhages,hard_exudates,total";
    std::string seed_mode = "logit", method = "lrp_a1b0", layers_csv = "all";
    std::string healthy_csv = "0,1,2";
    std::size_t depth = 3, classes = 5, n_images = 4, target = 3, bins = 0, random_trials = 0;
    bool zero_bias = false, uncentered = false;

    CLI::App* fixtures = app.add_subcommand("fixtures", "Generate a seeded synthetic network, "
                                                        "images, labels and lesion masks");
    fixtures->add_option("--seed", seed, "PRNG seed")->capture_default_str();
    fixtures->add_option("--out", out, "Output directory")->required();
    fixtures->add_option("--depth", depth, "Number of conv layers")->capture_default_str();
    fixtures->add_option("--channels", channels_csv, "Conv channels, one per layer")
        ->capture_default_str();
    fixtures->add_option("--input", input_csv, "Input shape C,H,W")->capture_default_str();
    fixtures->add_option("--classes", classes, "Class count")->capture_default_str();
    fixtures->add_flag("--zero-bias", zero_bias, "All biases zero (conservation fixtures)");
    fixtures->add_option("--images", n_images, "Number of synthetic images")
        ->capture_default_str();

    CLI::App* infer = app.add_subcommand("infer", "Run the network over an image directory "
                                                  "and write predictions.csv");
    infer->add_option("--net", net_path, "Network manifest JSON")->required();
    infer->add_option("--images", images_dir, "Directory of CHW NPY images")->required();
    infer->add_option("--labels", labels_path, "CSV image_id,grade")->required();
    infer->add_option("--out", out, "Output directory")->required();

    CLI::App* explain_cmd = app.add_subcommand("explain", "LRP heatmap per image "
                                                          "(channel-resolved NPY + sidecar)");
    explain_cmd->add_option("--net", net_path, "Network manifest JSON")->required();
    explain_cmd->add_option("--images", images_dir, "Directory of CHW NPY images")->required();
    explain_cmd->add_option("--target", target, "Output class to explain")
        ->capture_default_str();
    explain_cmd->add_option("--seed-mode", seed_mode, "logit | unit")->capture_default_str();
    explain_cmd->add_option("--out", out, "Output directory")->required();

    CLI::App* spectra_cmd = app.add_subcommand("spectra", "Per-layer eigen-spectra, condition "
                                                          "numbers and distribution fits");
    spectra_cmd->add_option("--net", net_path, "Network manifest JSON")->required();
    spectra_cmd->add_option("--images", images_dir, "Directory of CHW NPY images")->required();
    spectra_cmd->add_option("--out", out, "Output directory")->required();
    spectra_cmd->add_flag("--uncentered", uncentered,
                          "Uncentered Gram second moment instead of covariance");
    spectra_cmd->add_option("--layers", layers_csv, "'all' or a comma list of layer names")
        ->capture_default_str();
    spectra_cmd->add_option("--bins", bins, "Also emit a symmetrized density with this many bins");

    CLI::App* xai = app.add_subcommand("xai-eval", "Score heatmaps against lesion masks "
                                                   "(RMA/RRA mean and median)");
    xai->add_option("--heatmaps", heatmaps_dir, "Directory of CHW relevance NPYs")->required();
    xai->add_option("--masks", masks_index, "Mask index JSON")->required();
    xai->add_option("--pooling", poolings_csv, "Comma list of sum_pos,l2_norm_sq")
        ->capture_default_str();
    xai->add_option("--lesions", lesions_csv, "Comma list of lesion kinds")
        ->capture_default_str();
    xai->add_option("--method", method, "Method label for the report")->capture_default_str();
    xai->add_option("--trials", random_trials,
                    "Random-baseline trials per image (0 = no control rows)");
    xai->add_option("--seed", seed, "PRNG seed for the random baseline")->capture_default_str();
    xai->add_option("--out", out, "Output directory")->required();

    CLI::App* distort = app.add_subcommand("distort", "Write distorted copies of an image set "
                                                      "into kind/severity subdirectories");
    distort->add_option("--images", images_dir, "Directory of CHW NPY images")->required();
    distort->add_option("--kinds", kinds_csv, "Comma list of distortion kinds")
        ->capture_default_str();
    distort->add_option("--severity", severities_csv, "Comma list of severities 1..5")
        ->capture_default_str();
    distort->add_option("--seed", seed, "PRNG seed")->capture_default_str();
    distort->add_option("--out", out, "Output directory")->required();

    CLI::App* robust = app.add_subcommand("robustness", "Mean softmax disease-probability "
                                                        "difference grid between two models");
    robust->add_option("--net-a", net_path, "Model A manifest")->required();
    robust->add_option("--net-b", net_b_path, "Model B manifest")->required();
    robust->add_option("--images", images_dir, "Directory of CHW NPY images")->required();
    robust->add_option("--kinds", kinds_csv, "Comma list of distortion kinds")
        ->capture_default_str();
    robust->add_option("--severity", severities_csv, "Comma list of severities 1..5")
        ->capture_default_str();
    robust->add_option("--seed", seed, "PRNG seed")->capture_default_str();
    robust->add_option("--healthy-grades", healthy_csv, "Grades counted as healthy")
        ->capture_default_str();
    robust->add_option("--out", out, "Output directory")->required();

    CLI::App* auc_cmd = app.add_subcommand("auc", "Referable-disease AUC from a predictions CSV");
    auc_cmd->add_option("--pred", pred_path, "predictions.csv")->required();
    auc_cmd->add_option("--healthy-grades", healthy_csv, "Grades counted as healthy")
        ->capture_default_str();
    auc_cmd->add_option("--out", out, "Optional output directory for auc.json");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fixtures->parsed())
            return cmd_fixtures(seed, out, depth, channels_csv, input_csv, classes, zero_bias,
                                n_images);
        if (infer->parsed()) return cmd_infer(net_path, images_dir, labels_path, out);
        if (explain_cmd->parsed())
            return cmd_explain(net_path, images_dir, target, seed_mode, out);
        if (spectra_cmd->parsed())
            return cmd_spectra(net_path, images_dir, out, uncentered, layers_csv, bins);
        if (xai->parsed())
            return cmd_xai_eval(heatmaps_dir, masks_index, poolings_csv, lesions_csv, method,
                                random_trials, seed, out);
        if (distort->parsed())
            return cmd_distort(images_dir, kinds_csv, severities_csv, seed, out);
        if (robust->parsed())
            return cmd_robustness(net_path, net_b_path, images_dir, kinds_csv, severities_csv,
                                  seed, healthy_csv, out);
        if (auc_cmd->parsed()) return cmd_auc(pred_path, healthy_csv, out);
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
