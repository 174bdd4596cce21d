from biofilm_fv.app import main


if __name__ == "__main__":
    main()
