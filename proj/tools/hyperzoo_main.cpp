#include <exception>
#include <iostream>

#include "hz/cli.hpp"
#include "hz/errors.hpp"

int main(int argc, char** argv) {
    try {
        return hz::run_cli(argc, argv);
    } catch (const hz::VerificationError& e) {
        std::cerr << "verification failed: " << e.what() << "\n";
        return 4;
    } catch (const hz::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const hz::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
