// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <ostream>

#include "cli_common.hpp"
#include "codeforge/numeric/checkpoint.hpp"
#include "codeforge/tokenizers/char_vocab.hpp"
#include "codeforge/training/training.hpp"

namespace codeforge::cli {

namespace {

std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const corpus::CorpusError*>(&e)) return "corpus";
    if (dynamic_cast<const numeric::CheckpointError*>(&e)) return "checkpoint";
    if (dynamic_cast<const numeric::ShapeError*>(&e)) return "shape";
    if (dynamic_cast<const tokenizers::UnknownChar*>(&e)) return "unknown_char";
    if (dynamic_cast<const training::TrainingError*>(&e)) return "training";
    if (dynamic_cast<const std::invalid_argument*>(&e)) return "invalid_argument";
    if (dynamic_cast<const std::out_of_range*>(&e)) return "out_of_range";
    if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return "filesystem";
    return "runtime";
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Session session{out, err, args};
    CLI::App app{"codeforge: corpora, tokenizers, code search and code generation models", "codeforge"};
    app.set_version_flag("--version", CODEFORGE_VERSION);
    app.require_subcommand(1, 1);
    app.fallthrough(false);
    add_data_commands(app, session);
    add_train_commands(app, session);
    add_eval_commands(app, session);

    // CLI11 consumes arguments from the back.
    std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(reversed.begin(), reversed.end());
    try {
        app.parse(reversed);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, err, err);
        return 2;
    } catch (const std::exception& e) {
        err << nlohmann::json{{"error", error_kind(e)}, {"message", e.what()}}.dump(-1, ' ', false,
                                                                                    nlohmann::json::error_handler_t::replace)
            << '\n';
        return 1;
    }
}

}  // namespace codeforge::cli
