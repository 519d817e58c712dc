from least_gradient.cli import main

main()
